"""k-nearest-neighbour regression with Gaussian similarity weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..data import SampleSet
from .base import Forecaster, InsufficientDataError, MinMaxScaler, feature_names, training_rows


@dataclass(frozen=True)
class KnnConfig:
    k: int = 300
    sigma: float = 4.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def gaussian_weights(dist: np.ndarray, sigma: float) -> np.ndarray:
    """Normalised w_i = exp(-d_i^2 / (sigma^2 d_1^2)) per row of sorted distances.

    Rows whose closest distance is zero average the zero-distance
    neighbours uniformly instead.
    """
    dist = np.atleast_2d(np.asarray(dist, dtype=float))
    d1 = dist[:, :1]
    exact = d1[:, 0] == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.exp(-(dist * dist) / (sigma * sigma * d1 * d1))
    w[exact] = (dist[exact] == 0).astype(float)
    return w / w.sum(axis=1, keepdims=True)


def knn_regress(X_train, y_train, X_query, cfg: KnnConfig) -> np.ndarray:
    """Weighted neighbour average on features already scaled to [0, 1]."""
    if len(X_train) == 0:
        raise InsufficientDataError("kNN needs at least one training sample")
    idx, dist = kernels.knn_query(X_train, X_query, min(cfg.k, len(X_train)))
    w = gaussian_weights(dist, cfg.sigma)
    return (w * np.asarray(y_train)[idx]).sum(axis=1)


def knn_predict(train: SampleSet, query: SampleSet, cfg: KnnConfig = KnnConfig(),
                names=None) -> np.ndarray:
    """Forecast kW for each query sample from its k most similar training hours."""
    names = names or feature_names("knn")
    X, y = training_rows(train, names)
    if len(X) == 0:
        raise InsufficientDataError("kNN needs at least one training sample")
    scaler = MinMaxScaler.fit(X)
    Xq = scaler.transform(query.matrix(names))
    return knn_regress(scaler.transform(X), y, Xq, cfg) * query.nominal_power


class KnnForecaster(Forecaster):
    name = "knn"

    def __init__(self, cfg: KnnConfig = KnnConfig(), use_temperature: bool = False):
        self.cfg = cfg
        self.names = feature_names("knn", use_temperature)
        self._store = None

    def fit(self, train: SampleSet, now=None):
        X, y = training_rows(train, self.names)
        scaler = MinMaxScaler.fit(X)
        self._store = (scaler, scaler.transform(X), y)
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        scaler, Xs, y = self._store
        Xq = scaler.transform(samples.matrix(self.names))
        return knn_regress(Xs, y, Xq, self.cfg) * samples.nominal_power

    def describe(self) -> dict:
        return {"name": self.name, "k": self.cfg.k, "sigma": self.cfg.sigma,
                "features": list(self.names)}
