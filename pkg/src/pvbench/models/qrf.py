"""Quantile regression forest.

Trees are grown on bootstrap resamples (multiplicities act as weights)
and keep every in-bag training index in their leaves, so a prediction is
a quantile of the forest-weighted empirical distribution of the training
targets rather than a mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..data import SampleSet
from .base import Forecaster, InsufficientDataError, MinMaxScaler, feature_names, training_rows


@dataclass(frozen=True)
class QrfConfig:
    n_trees: int = 300
    min_leaf: int = 5
    quantile: float = 0.4
    features_per_split: int | None = None   # default ceil(p / 3)
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be positive")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")


@dataclass
class QRFModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    roots: np.ndarray
    leaf_start: np.ndarray
    leaf_end: np.ndarray
    leaf_samples: np.ndarray
    leaf_weights: np.ndarray
    rank_of: np.ndarray
    y_sorted: np.ndarray
    quantile: float

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    def quantiles(self, Xs: np.ndarray, qs) -> np.ndarray:
        return kernels.forest_quantiles(
            self.feature, self.threshold, self.left, self.right, self.roots,
            self.leaf_start, self.leaf_end, self.leaf_samples, self.leaf_weights,
            self.rank_of, self.y_sorted, np.asarray(Xs, dtype=float), np.atleast_1d(qs))

    def predict(self, Xs: np.ndarray, q: float | None = None) -> np.ndarray:
        return self.quantiles(Xs, [self.quantile if q is None else q])[:, 0]


def qrf_fit_matrix(X, y, cfg: QrfConfig = QrfConfig()) -> QRFModel:
    X = np.ascontiguousarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < cfg.min_leaf:
        raise InsufficientDataError(f"QRF needs at least {cfg.min_leaf} training samples, got {n}")
    mtry = cfg.features_per_split or math.ceil(p / 3)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    rng = np.random.default_rng(cfg.rng_seed)
    parts = []
    node_off = 0
    leaf_off = 0
    for _ in range(cfg.n_trees):
        counts = np.bincount(rng.integers(0, n, n), minlength=n)
        seed = int(rng.integers(0, 2**63 - 1))
        f, thr, lft, rgt, ls, le, samp, w = kernels.build_tree(
            X, y, counts, order, cfg.min_leaf, mtry, seed)
        internal = f >= 0
        lft = np.where(internal, lft + node_off, -1)
        rgt = np.where(internal, rgt + node_off, -1)
        parts.append((f, thr, lft, rgt, ls + leaf_off, le + leaf_off, samp, w, node_off))
        node_off += len(f)
        leaf_off += len(samp)
    cat = lambda k: np.concatenate([pt[k] for pt in parts])
    ranks = np.argsort(y, kind="stable")
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[ranks] = np.arange(n)
    return QRFModel(cat(0), cat(1), cat(2), cat(3),
                    np.array([pt[8] for pt in parts], dtype=np.int64),
                    cat(4), cat(5), cat(6), cat(7), rank_of, y[ranks], cfg.quantile)


class QrfForecaster(Forecaster):
    name = "qrf"

    def __init__(self, cfg: QrfConfig = QrfConfig(), use_temperature: bool = False):
        self.cfg = cfg
        self.names = feature_names("qrf", use_temperature)
        self.scaler: MinMaxScaler | None = None
        self.model: QRFModel | None = None

    def fit(self, train: SampleSet, now=None):
        X, y = training_rows(train, self.names)
        self.scaler = MinMaxScaler.fit(X)
        self.model = qrf_fit_matrix(self.scaler.transform(X), y, self.cfg)
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        Xq = self.scaler.transform(samples.matrix(self.names))
        return self.model.predict(Xq) * samples.nominal_power

    def describe(self) -> dict:
        return {"name": self.name, "n_trees": self.cfg.n_trees, "min_leaf": self.cfg.min_leaf,
                "quantile": self.cfg.quantile, "features": list(self.names)}
