"""Shared pieces of the forecasting models: feature sets, scaling, clamping."""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from ..data import SampleSet
from ..solar import SunPosition

IRRADIANCE_FEATURES = ("gti",)
RICH_FEATURES = ("gti", "dti", "bti", "sun_azimuth", "sun_elevation")

DEFAULT_FEATURES = {
    "gb": IRRADIANCE_FEATURES,
    "nn": IRRADIANCE_FEATURES,
    "knn": RICH_FEATURES,
    "qrf": RICH_FEATURES,
    "svr": RICH_FEATURES,
}


class ModelError(RuntimeError):
    """A model could not be fitted or evaluated."""


class InsufficientDataError(ModelError):
    pass


class ConvergenceError(ModelError):
    pass


def feature_names(model: str, use_temperature: bool = False) -> tuple[str, ...]:
    names = DEFAULT_FEATURES[model]
    return names + ("temperature",) if use_temperature else names


@dataclass
class MinMaxScaler:
    """Per-feature affine map of the training range onto [0, 1]."""

    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise InsufficientDataError("cannot derive scaling bounds from no samples")
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        span = self.high - self.low
        safe = np.where(span > 0, span, 1.0)
        out = (np.asarray(X, dtype=float) - self.low) / safe
        return np.where(span > 0, out, 0.0)


def clamp_forecast(raw, nominal, sun) -> np.ndarray:
    """Zero at night, otherwise clipped to [0, nominal]."""
    el = sun.elevation if isinstance(sun, SunPosition) else sun
    el = np.asarray(el, dtype=float)
    out = np.clip(np.asarray(raw, dtype=float), 0.0, np.asarray(nominal, dtype=float))
    out = np.where(el > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def training_rows(train: SampleSet, names) -> tuple[np.ndarray, np.ndarray]:
    """Daytime feature matrix and nominal-normalised power of a training set."""
    day = train.daytime
    X = train.matrix(names)[day]
    y = (train.measured_power / train.nominal_power)[day]
    if "temperature" in names and np.isnan(X).any():
        keep = ~np.isnan(X).any(axis=1)
        X, y = X[keep], y[keep]
    return X, y


class Forecaster(abc.ABC):
    """Uniform fit / predict surface over every forecasting method."""

    name: str = ""

    @abc.abstractmethod
    def fit(self, train: SampleSet, now=None) -> "Forecaster":
        ...

    @abc.abstractmethod
    def predict(self, samples: SampleSet) -> np.ndarray:
        """Raw (unclamped) power in kW for every sample."""

    @abc.abstractmethod
    def describe(self) -> dict:
        ...
