"""Normalised error metrics over hourly forecasts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class MetricReport:
    nmae: float    # percent
    nrmse: float   # percent
    mae: float     # kW
    nmbe: float    # percent, positive = overestimation
    n_hours: int
    scope: str = "overall"

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(forecast, measured, nominal, scope: str = "overall") -> MetricReport:
    """nMAE, nRMSE, nMBE (percent, per-hour nominal in the denominator) and MAE in kW."""
    f = np.asarray(forecast, dtype=float)
    m = np.asarray(measured, dtype=float)
    n = np.asarray(nominal, dtype=float)
    if not (f.shape == m.shape == n.shape) or f.ndim != 1:
        raise ValueError("forecast, measured and nominal must be 1-d series of equal length")
    if f.size == 0:
        raise ValueError("metrics need at least one hour")
    if not (np.isfinite(f).all() and np.isfinite(m).all() and np.isfinite(n).all()):
        raise ValueError("metrics need finite values; drop missing hours first")
    if np.any(n <= 0):
        raise ValueError("nominal power must be positive")
    e = f - m
    r = e / n
    k = f.size
    # correctly rounded sums: the bias can be a small difference of large terms
    return MetricReport(
        nmae=math.fsum(np.abs(r)) / k * 100.0,
        nrmse=math.sqrt(math.fsum(r * r) / k) * 100.0,
        mae=math.fsum(np.abs(e)) / k,
        nmbe=math.fsum(r) / k * 100.0,
        n_hours=int(f.size),
        scope=scope,
    )
