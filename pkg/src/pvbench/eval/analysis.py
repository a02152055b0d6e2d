"""Post-hoc analysis of backtest records: CSI strata, significance, daily bias density."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import MetricReport, compute_metrics

CSI_EDGES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
EXACT_LIMIT = 25
DENSITY_GRID = 512
MIN_DENSITY_DAYS = 30


def csi_bucket_labels() -> list[str]:
    labels = [f"<={CSI_EDGES[1]:.1f}"]
    for lo, hi in zip(CSI_EDGES[1:-1], CSI_EDGES[2:]):
        labels.append(f"({lo:.1f},{hi:.1f}]")
    return labels


def csi_bucket_index(csi) -> np.ndarray:
    """Bucket 0 holds CSI <= 0.1, bucket k holds (0.k, 0.k+0.1]; CSI above 1 joins the top bucket.

    Undefined CSI maps to -1.
    """
    csi = np.asarray(csi, dtype=float)
    idx = np.searchsorted(np.asarray(CSI_EDGES[1:-1]), csi, side="left")
    return np.where(np.isnan(csi), -1, idx)


@dataclass(frozen=True)
class BucketRow:
    label: str
    model: str
    n_hours: int
    metrics: MetricReport | None


def csi_stratify(report, models=None) -> list[BucketRow]:
    """Per-bucket metrics for every model over hours with a defined clear-sky index."""
    rec = report.records
    rows = []
    labels = csi_bucket_labels()
    for model in models or report.models:
        sel = (rec.model == model) & np.isfinite(rec.forecast)
        b = csi_bucket_index(rec.csi[sel])
        f, m, n = rec.forecast[sel], rec.measured[sel], rec.nominal[sel]
        for k, label in enumerate(labels):
            hit = b == k
            cnt = int(hit.sum())
            mr = compute_metrics(f[hit], m[hit], n[hit], "csi-bucket") if cnt else None
            rows.append(BucketRow(label, model, cnt, mr))
    return rows


# ---------------------------------------------------------------- Wilcoxon

@dataclass(frozen=True)
class SignificanceResult:
    statistic: float
    p_value: float
    method: str          # "exact" or "normal-approximation"
    n_effective: int
    zeros_dropped: int = 0

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "method": self.method,
                "n_effective": self.n_effective, "zeros_dropped": self.zeros_dropped}


def midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_two_sided(ranks: np.ndarray, w: float) -> float:
    """P(min(W+, W-) <= w) under the null, counting sign patterns on the (doubled) ranks."""
    r2 = np.rint(ranks * 2).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    w2 = int(round(w * 2))
    lo = int(counts[: w2 + 1].sum())
    hi = int(counts[total - w2:].sum())
    p = (lo + hi) / float(2 ** len(r2)) if 2 * w2 != total else 1.0
    return min(1.0, float(p))


def wilcoxon_signed_rank(errors_a, errors_b) -> SignificanceResult:
    """Two-sided signed-rank test on paired series.

    Zero differences are dropped, ties get mid-ranks. Exact null
    distribution for at most 25 non-zero pairs, otherwise the normal
    approximation with tie-corrected variance (no continuity correction).
    """
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired series must have equal length")
    d = a - b
    nz = d[d != 0]
    zeros = int(d.size - nz.size)
    n = nz.size
    if n < 5:
        raise ValueError(f"Wilcoxon test needs at least 5 non-zero pairs, got {n}")
    ranks = midranks(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    w_minus = float(ranks[nz < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_LIMIT:
        return SignificanceResult(w, _exact_two_sided(ranks, w), "exact", n, zeros)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
    z = (w - mean) / math.sqrt(var) if var > 0 else 0.0
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return SignificanceResult(w, min(1.0, p), "normal-approximation", n, zeros)


# ---------------------------------------------------------------- daily bias density

@dataclass(frozen=True)
class DensityEstimate:
    model: str
    grid: np.ndarray
    density: np.ndarray
    daily_nmbe: np.ndarray
    days: np.ndarray
    variance: float
    bandwidth: float


def daily_nmbe(report, model: str) -> tuple[np.ndarray, np.ndarray]:
    """Per (plant, UTC day) nMBE in percent; returns (day index, values)."""
    rec = report.records
    sel = (rec.model == model) & np.isfinite(rec.forecast)
    if not sel.any():
        raise ValueError(f"model {model!r} has no forecasts in the report")
    day = rec.ts[sel] // 86400
    plant = rec.plant[sel]
    r = (rec.forecast[sel] - rec.measured[sel]) / rec.nominal[sel]
    _, code = np.unique(plant, return_inverse=True)
    uniq, inv = np.unique(code.astype(np.int64) * (1 << 32) + day, return_inverse=True)
    sums = np.bincount(inv, weights=r)
    cnt = np.bincount(inv)
    return uniq % (1 << 32), sums / cnt * 100.0


def kde(values: np.ndarray, n_grid: int = DENSITY_GRID):
    """Gaussian KDE with Silverman's bandwidth on mean +/- 5 sd, renormalised on the grid."""
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    q75, q25 = np.percentile(v, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    half = 5.0 * sd if sd > 0 else 1.0
    grid = np.linspace(v.mean() - half, v.mean() + half, n_grid)
    step = grid[1] - grid[0]
    h = 0.9 * spread * v.size ** -0.2 if spread > 0 else 2.0 * step
    z = (grid[:, None] - v[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (v.size * h * math.sqrt(2 * math.pi))
    area = np.trapezoid(dens, grid)
    if area > 0:
        dens = dens / area
    return grid, dens, h


def daily_nmbe_density(report, model: str) -> DensityEstimate:
    days, vals = daily_nmbe(report, model)
    if vals.size < MIN_DENSITY_DAYS:
        raise ValueError(f"density needs at least {MIN_DENSITY_DAYS} test days, got {vals.size}")
    grid, dens, h = kde(vals)
    var = float(vals.var(ddof=1))
    return DensityEstimate(model, grid, dens, vals, days, var, float(h))
