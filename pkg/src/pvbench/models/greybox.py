"""Second-order grey-box model p = c1*g + c2*g^2 refitted on a trailing window."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from ..data import SampleSet, epoch
from .base import Forecaster, InsufficientDataError, ModelError

FIT_WINDOW = timedelta(weeks=4)
MIN_DAYTIME_SAMPLES = 24


class RankDeficientError(ModelError):
    pass


@dataclass
class GBModel:
    c1: float
    c2: float
    c3: float = 0.0
    fit_window: timedelta = FIT_WINDOW

    def __post_init__(self):
        if not (np.isfinite(self.c1) and np.isfinite(self.c2)):
            raise ModelError("grey-box coefficients must be finite")
        if self.fit_window <= timedelta(0):
            raise ValueError("fit window must be positive")


def gb_fit(train: SampleSet, now=None, window: timedelta = FIT_WINDOW) -> GBModel:
    """Least-squares (pseudo-inverse) fit of c1, c2 on [now - window, now).

    ``now`` defaults to one hour after the last training sample. The
    temperature cross term is fixed at zero.
    """
    if now is None:
        now = int(train.timestamps[-1]) + 3600 if len(train) else 0
    recent = train.window(epoch(now) - int(window.total_seconds()), epoch(now))
    day = recent.daytime
    if day.sum() < MIN_DAYTIME_SAMPLES:
        raise InsufficientDataError(
            f"grey-box fit needs {MIN_DAYTIME_SAMPLES} daytime samples, got {int(day.sum())}")
    g = recent.features["gti"][day] / 1000.0
    p = recent.measured_power[day] / recent.nominal_power[day]
    A = np.column_stack([g, g * g])
    if np.linalg.matrix_rank(A) < 2:
        raise RankDeficientError("grey-box design matrix is rank deficient")
    (c1, c2), *_ = np.linalg.lstsq(A, p, rcond=None)
    return GBModel(float(c1), float(c2), 0.0, window)


def gb_predict(model: GBModel, gti, nominal):
    g = np.asarray(gti, dtype=float) / 1000.0
    out = np.asarray(nominal, dtype=float) * (model.c1 * g + model.c2 * g * g)
    return float(out) if out.ndim == 0 else out


class GreyBoxForecaster(Forecaster):
    name = "gb"

    def __init__(self, window_weeks: float = 4.0):
        self.window = timedelta(weeks=window_weeks)
        self.model: GBModel | None = None

    def fit(self, train: SampleSet, now=None):
        self.model = gb_fit(train, now, self.window)
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        if self.model is None:
            raise ModelError("grey-box model is not fitted")
        return gb_predict(self.model, samples.features["gti"], samples.nominal_power)

    def describe(self) -> dict:
        d = {"name": self.name, "fit_window_weeks": self.window / timedelta(weeks=1)}
        if self.model is not None:
            d.update(c1=self.model.c1, c2=self.model.c2, c3=self.model.c3)
        return d
