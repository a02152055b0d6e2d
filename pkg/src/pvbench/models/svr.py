"""nu-support vector regression with an RBF kernel.

The dual is solved by SMO in the kernel backend; this module builds the
kernel matrix, recovers the bias and tube width, and keeps the support
vectors for prediction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..data import SampleSet
from .base import (ConvergenceError, Forecaster, InsufficientDataError, MinMaxScaler,
                   feature_names, training_rows)


@dataclass(frozen=True)
class SvrConfig:
    nu: float = 0.5
    gamma: float = 1.25
    c_reg: float = 1.0
    tol: float = 1e-3
    max_iter: int = 10_000_000

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        if self.gamma <= 0 or self.c_reg <= 0 or self.tol <= 0:
            raise ValueError("gamma, C and tolerance must be positive")


@dataclass
class SVRModel:
    support: np.ndarray        # scaled support vectors
    coef: np.ndarray           # alpha - alpha*
    rho: float
    epsilon: float
    gamma: float
    n_iter: int
    alpha2: np.ndarray = field(repr=False, default=None)

    def decision(self, Xs: np.ndarray) -> np.ndarray:
        return rbf_kernel(Xs, self.support, self.gamma) @ self.coef - self.rho


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * |a - b|^2), summed feature by feature so every entry is
    computed the same way regardless of block shape (exactly symmetric)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d2 = np.zeros((A.shape[0], B.shape[0]))
    diff = np.empty_like(d2)
    for f in range(A.shape[1]):
        np.subtract(A[:, f, None], B[None, :, f], out=diff)
        diff *= diff
        d2 += diff
    d2 *= -gamma
    return np.exp(d2, out=d2)


class KernelCache:
    """Kernel matrix of a growing training set, extended in place.

    Rows for appended samples are computed on demand; any change of the
    earlier samples (e.g. new scaling bounds) triggers a full rebuild.
    """

    def __init__(self, gamma: float):
        self.gamma = gamma
        self.buf = None
        self.X = None

    def matrix(self, Xs: np.ndarray) -> np.ndarray:
        n = len(Xs)
        n_old = 0 if self.X is None else len(self.X)
        reuse = self.X is not None and n_old <= n and np.array_equal(Xs[:n_old], self.X)
        if self.buf is None or self.buf.shape[0] < n:
            cap = int(n * 1.25) + 64
            old = self.buf
            self.buf = np.empty((cap, cap))
            if reuse and n_old:
                self.buf[:n_old, :n_old] = old[:n_old, :n_old]
        if not reuse:
            n_old = 0
        if n_old < n:
            rows = rbf_kernel(Xs[n_old:], Xs[:n], self.gamma)
            self.buf[n_old:n, :n] = rows
            self.buf[:n_old, n_old:n] = rows[:, :n_old].T
        self.X = Xs.copy()
        return self.buf


def _rho_and_r(alpha2, G, C):
    """Bias and the tube-width multiplier from the KKT conditions of the dual."""
    l = len(alpha2) // 2
    r = []
    for half, s in ((slice(0, l), 1.0), (slice(l, 2 * l), -1.0)):
        a, g = alpha2[half], G[half]
        upper, lower = a >= C, a <= 0
        free = ~upper & ~lower
        if free.any():
            r.append(g[free].mean())
        else:
            ub = g[lower].min() if lower.any() else np.inf
            lb = g[upper].max() if upper.any() else -np.inf
            r.append((ub + lb) / 2.0)
    r1, r2 = r
    return (r1 - r2) / 2.0, (r1 + r2) / 2.0


def kkt_violation(K, z, C, alpha2) -> float:
    """Maximal violating-pair gap of a dual point (zero at the exact optimum)."""
    l = len(z)
    G = kernels.warm_gradient(K, z, alpha2)
    pos = np.arange(2 * l) < l
    up, lo = alpha2 >= C, alpha2 <= 0

    def gmax(mask, v):
        return v[mask].max() if mask.any() else -np.inf
    gp = gmax(pos & ~up, -G) + gmax(pos & ~lo, G)
    gn = gmax(~pos & ~lo, G) + gmax(~pos & ~up, -G)
    return float(max(gp, gn))


def warm_start_point(previous: np.ndarray, n_total: int, C: float, nu: float) -> np.ndarray:
    """Extend a dual solution on a prefix of the samples to a feasible point on all of them.

    New samples receive C*nu/2 in both halves, which keeps each half's sum
    at C*nu*l/2.
    """
    l_old = len(previous) // 2
    extra = n_total - l_old
    if extra < 0:
        raise ValueError("warm start needs a prefix of the new training set")
    fill = np.full(extra, C * nu / 2.0)
    return np.concatenate([previous[:l_old], fill, previous[l_old:], fill])


def svr_fit_matrix(Xs, z, cfg: SvrConfig = SvrConfig(), alpha0=None, K=None) -> SVRModel:
    """Fit on features already scaled to [0, 1]."""
    Xs = np.asarray(Xs, dtype=float)
    z = np.asarray(z, dtype=float)
    if len(z) < 2:
        raise InsufficientDataError("nu-SVR needs at least two samples")
    if K is None:
        K = rbf_kernel(Xs, Xs, cfg.gamma)
    elif K.shape[0] < len(z):
        raise ValueError("kernel matrix smaller than the training set")
    alpha2, G, n_iter, converged = kernels.nu_svr_smo(
        K, z, cfg.c_reg, cfg.nu, cfg.tol, cfg.max_iter, alpha0)
    if not converged:
        raise ConvergenceError(
            f"nu-SVR did not reach KKT tolerance {cfg.tol} in {cfg.max_iter} iterations")
    rho, r = _rho_and_r(alpha2, G, cfg.c_reg)
    l = len(z)
    coef = alpha2[:l] - alpha2[l:]
    sv = coef != 0
    return SVRModel(Xs[sv].copy(), coef[sv].copy(), float(rho), float(-r), cfg.gamma,
                    int(n_iter), alpha2)


class SvrForecaster(Forecaster):
    """nu-SVR on nominal-normalised power.

    Refits on a training set that extends the previous one warm-start from
    the previous dual solution, which converges to the same optimum (within
    the KKT tolerance) in far fewer iterations.
    """

    name = "svr"

    def __init__(self, cfg: SvrConfig = SvrConfig(), use_temperature: bool = False,
                 warm_start: bool = True):
        self.cfg = cfg
        self.names = feature_names("svr", use_temperature)
        self.warm_start = warm_start
        self.scaler: MinMaxScaler | None = None
        self.model: SVRModel | None = None
        self._prefix = None
        self._cache = KernelCache(cfg.gamma)

    def fit(self, train: SampleSet, now=None):
        X, y = training_rows(train, self.names)
        ts = train.timestamps[train.daytime]
        alpha0 = None
        if self.warm_start and self._prefix is not None:
            old_ts = self._prefix
            if len(old_ts) <= len(ts) and np.array_equal(ts[:len(old_ts)], old_ts):
                alpha0 = warm_start_point(self.model.alpha2, len(ts), self.cfg.c_reg, self.cfg.nu)
        self.scaler = MinMaxScaler.fit(X)
        Xs = self.scaler.transform(X)
        self.model = svr_fit_matrix(Xs, y, self.cfg, alpha0, self._cache.matrix(Xs))
        self._prefix = ts.copy() if len(ts) == len(X) else None
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        Xq = self.scaler.transform(samples.matrix(self.names))
        return self.model.decision(Xq) * samples.nominal_power

    def __getstate__(self):
        # the kernel cache is a speed-up only and can be hundreds of MB
        state = self.__dict__.copy()
        state["_cache"] = KernelCache(self.cfg.gamma)
        return state

    def describe(self) -> dict:
        d = {"name": self.name, "nu": self.cfg.nu, "gamma": self.cfg.gamma,
             "C": self.cfg.c_reg, "tol": self.cfg.tol, "features": list(self.names)}
        if self.model is not None:
            d.update(n_support=len(self.model.coef), epsilon=self.model.epsilon,
                     rho=self.model.rho, iterations=self.model.n_iter)
        return d
