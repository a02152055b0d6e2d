"""Small sigmoid network trained by Levenberg-Marquardt with Bayesian regularisation.

The objective is M(w) = beta*E_D + alpha*E_W with E_D = sum(e^2)/2 and
E_W = sum(w^2)/2. After every accepted step the hyperparameters are
re-estimated from the effective number of parameters
gamma = P - alpha*tr(A^-1), A = beta*J'J + alpha*I, and the weights
with the highest log evidence seen during training are kept.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..data import SampleSet
from .base import Forecaster, InsufficientDataError, MinMaxScaler, ModelError, feature_names, training_rows


@dataclass(frozen=True)
class NnConfig:
    hidden: int = 3
    max_epochs: int = 200
    mu: float = 0.005
    mu_dec: float = 0.1
    mu_inc: float = 10.0
    mu_max: float = 1e10
    min_grad: float = 1e-7
    rng_seed: int = 0
    restarts: int = 3

    def __post_init__(self):
        if self.hidden < 1 or self.max_epochs < 1:
            raise ValueError("hidden units and epochs must be positive")


def n_params(d: int, hidden: int) -> int:
    return hidden * d + 2 * hidden + 1


def unpack(w: np.ndarray, d: int, hidden: int):
    h = hidden
    W1 = w[:h * d].reshape(h, d)
    b1 = w[h * d:h * d + h]
    w2 = w[h * d + h:h * d + 2 * h]
    b2 = w[-1]
    return W1, b1, w2, b2


def forward(w: np.ndarray, X: np.ndarray, hidden: int):
    W1, b1, w2, b2 = unpack(w, X.shape[1], hidden)
    H = 1.0 / (1.0 + np.exp(-(X @ W1.T + b1)))
    return H @ w2 + b2, H


def jacobian(w: np.ndarray, X: np.ndarray, hidden: int):
    """Network outputs and d(output)/d(w), shape (n, P)."""
    W1, b1, w2, b2 = unpack(w, X.shape[1], hidden)
    out, H = forward(w, X, hidden)
    dH = H * (1.0 - H) * w2
    n, d = X.shape
    J = np.empty((n, n_params(d, hidden)))
    J[:, :hidden * d] = (dH[:, :, None] * X[:, None, :]).reshape(n, hidden * d)
    J[:, hidden * d:hidden * d + hidden] = dH
    J[:, hidden * d + hidden:hidden * d + 2 * hidden] = H
    J[:, -1] = 1.0
    return out, J


def objective_and_gradient(w, X, t, alpha, beta, hidden):
    """Regularised objective M(w) and its exact gradient."""
    out, J = jacobian(w, X, hidden)
    e = out - t
    M = beta * 0.5 * e @ e + alpha * 0.5 * w @ w
    return float(M), beta * (J.T @ e) + alpha * w


def log_evidence(E_D, E_W, alpha, beta, A, n, P) -> float:
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0 or alpha <= 0 or beta <= 0:
        return -math.inf
    return float(-beta * E_D - alpha * E_W - 0.5 * logdet + 0.5 * P * math.log(alpha)
                 + 0.5 * n * math.log(beta) - 0.5 * n * math.log(2 * math.pi))


@dataclass
class NNModel:
    weights: np.ndarray
    hidden: int
    alpha: float
    beta: float
    gamma: float
    log_evidence: float
    epochs: int

    def predict(self, Xs: np.ndarray) -> np.ndarray:
        return forward(self.weights, np.asarray(Xs, dtype=float), self.hidden)[0]


def _initial_weights(rng, d, hidden):
    return rng.uniform(-0.5, 0.5, n_params(d, hidden))


def _train_once(X, t, cfg: NnConfig, w):
    n = len(t)
    P = len(w)
    alpha, beta = 0.0, 1.0
    mu = cfg.mu
    out, J = jacobian(w, X, cfg.hidden)
    e = out - t
    best = None
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        JtJ = J.T @ J
        grad = beta * (J.T @ e) + alpha * w
        if np.linalg.norm(grad) < cfg.min_grad:
            break
        M = beta * 0.5 * e @ e + alpha * 0.5 * w @ w
        accepted = False
        while mu <= cfg.mu_max:
            H = beta * JtJ + (alpha + mu) * np.eye(P)
            step = np.linalg.solve(H, -grad)
            w_new = w + step
            out_new, J_new = jacobian(w_new, X, cfg.hidden)
            e_new = out_new - t
            M_new = beta * 0.5 * e_new @ e_new + alpha * 0.5 * w_new @ w_new
            if np.isfinite(M_new) and M_new < M:
                accepted = True
                mu *= cfg.mu_dec
                break
            mu *= cfg.mu_inc
        if not accepted:
            break
        w, J, e = w_new, J_new, e_new
        E_D = 0.5 * e @ e
        E_W = 0.5 * w @ w
        A = beta * (J.T @ J) + alpha * np.eye(P)
        gamma = P - alpha * np.trace(np.linalg.inv(A)) if alpha > 0 else float(P)
        gamma = min(max(gamma, 1e-9), P)
        alpha = gamma / (2.0 * E_W) if E_W > 0 else 1.0
        beta = (n - gamma) / (2.0 * E_D) if E_D > 0 else 1e10
        A = beta * (J.T @ J) + alpha * np.eye(P)
        ev = log_evidence(E_D, E_W, alpha, beta, A, n, P)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("network weights diverged")
        if best is None or ev > best.log_evidence:
            best = NNModel(w.copy(), cfg.hidden, float(alpha), float(beta), float(gamma), ev, epoch)
    if best is None:
        best = NNModel(w.copy(), cfg.hidden, alpha, beta, float(P), -math.inf, epoch)
    if not np.all(np.isfinite(best.weights)):
        raise FloatingPointError("network weights diverged")
    return best


def nn_fit_matrix(Xs, t, cfg: NnConfig = NnConfig(), init=None) -> NNModel:
    """Train on features scaled to [0, 1]; reseeds after a diverged run."""
    Xs = np.asarray(Xs, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        raise InsufficientDataError("the network needs at least two samples")
    d = Xs.shape[1]
    if len(t) < 10 * n_params(d, cfg.hidden):
        warnings.warn(f"{len(t)} training samples for {n_params(d, cfg.hidden)} network weights; "
                      "fewer than ten per weight", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(cfg.rng_seed)
    last = None
    for attempt in range(cfg.restarts):
        if init is not None and attempt == 0:
            w0 = np.array(init, dtype=float)
        else:
            w0 = _initial_weights(rng, d, cfg.hidden)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                return _train_once(Xs, t, cfg, w0)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            last = exc
    raise ModelError(f"network training diverged after {cfg.restarts} attempts: {last}")


class NnForecaster(Forecaster):
    """Network on nominal-normalised power; refits start from the previous weights."""

    name = "nn"

    def __init__(self, cfg: NnConfig = NnConfig(), use_temperature: bool = False,
                 warm_start: bool = True):
        self.cfg = cfg
        self.names = feature_names("nn", use_temperature)
        self.warm_start = warm_start
        self.scaler: MinMaxScaler | None = None
        self.model: NNModel | None = None

    def fit(self, train: SampleSet, now=None):
        X, y = training_rows(train, self.names)
        self.scaler = MinMaxScaler.fit(X)
        init = self.model.weights if (self.warm_start and self.model is not None) else None
        self.model = nn_fit_matrix(self.scaler.transform(X), y, self.cfg, init)
        return self

    def predict(self, samples: SampleSet) -> np.ndarray:
        Xq = self.scaler.transform(samples.matrix(self.names))
        return self.model.predict(Xq) * samples.nominal_power

    def describe(self) -> dict:
        d = {"name": self.name, "hidden": self.cfg.hidden, "features": list(self.names)}
        if self.model is not None:
            d.update(alpha=self.model.alpha, beta=self.model.beta,
                     effective_params=self.model.gamma, epochs=self.model.epochs)
        return d
