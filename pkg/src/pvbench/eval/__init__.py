"""Metrics, rolling backtests and post-hoc analysis."""
from .analysis import (CSI_EDGES, DensityEstimate, SignificanceResult, csi_bucket_index,
                       csi_bucket_labels, csi_stratify, daily_nmbe_density, wilcoxon_signed_rank)
from .backtest import (BacktestConfig, BacktestReport, LeakageError, SubstitutionResult,
                       run_backtest, weather_substitution)
from .metrics import MetricReport, compute_metrics

__all__ = [
    "BacktestConfig", "BacktestReport", "CSI_EDGES", "DensityEstimate", "LeakageError",
    "MetricReport", "SignificanceResult", "SubstitutionResult", "compute_metrics",
    "csi_bucket_index", "csi_bucket_labels", "csi_stratify", "daily_nmbe_density",
    "run_backtest", "weather_substitution", "wilcoxon_signed_rank",
]
