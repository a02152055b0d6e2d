"""Rolling-origin backtest over a fleet and the tables derived from it."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Mapping

import numpy as np

from ..data import HOUR, WEEK, SampleSet, epoch, format_float, format_ts, from_epoch, parse_ts, rolling_folds
from ..models import BASE_MODELS, ModelError, clamp_forecast, ens_fit, ens_predict, make_forecaster
from .analysis import csi_bucket_labels, csi_stratify, wilcoxon_signed_rank
from .metrics import MetricReport, compute_metrics

REPORT_SCHEMA_VERSION = 1
HOURLY_HEADER = ["ts_utc", "plant_id", "model", "forecast_kw", "measured_kw", "nominal_kw", "csi"]


class LeakageError(AssertionError):
    pass


@dataclass(frozen=True)
class BacktestConfig:
    models: tuple[str, ...] = ("gb", "nn", "knn", "qrf", "svr", "ens")
    initial_train_end: object = None
    step: timedelta = WEEK
    validation_weeks: int = 8
    seed: int = 0
    params: Mapping[str, dict] = field(default_factory=dict)
    use_temperature: bool = False

    def __post_init__(self):
        unknown = set(self.models) - set(BASE_MODELS) - {"ens"}
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")
        if "ens" in self.models and len(self.members) < 2:
            raise ValueError("the ensemble needs at least two member models")
        if self.validation_weeks < 1:
            raise ValueError("validation window must be at least one week")

    @property
    def members(self) -> tuple[str, ...]:
        return tuple(m for m in self.models if m != "ens")


@dataclass
class HourlyRecords:
    """Columnar per-hour results; NaN forecast marks a failed (missing) hour."""

    ts: np.ndarray
    plant: np.ndarray
    model: np.ndarray
    forecast: np.ndarray
    measured: np.ndarray
    nominal: np.ndarray
    csi: np.ndarray
    fold: np.ndarray

    @classmethod
    def concat(cls, parts: list["HourlyRecords"]) -> "HourlyRecords":
        if not parts:
            return cls(*(np.empty(0, dtype=d) for d in
                         (np.int64, object, object, float, float, float, float, np.int64)))
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("ts", "plant", "model", "forecast", "measured", "nominal", "csi", "fold")))

    def __len__(self):
        return len(self.ts)


@dataclass
class FitFailure:
    plant: str
    fold: int
    model: str
    error: str


@dataclass
class WeightRecord:
    plant: str
    fold: int
    members: tuple[str, ...]
    raw: list[float]
    normalized: list[float]
    validation_hours: int
    sse_raw: float
    sse_members: list[float]


@dataclass
class BacktestReport:
    models: tuple[str, ...]
    plants: tuple[str, ...]
    folds: list
    records: HourlyRecords
    weights: list[WeightRecord] = field(default_factory=list)
    failures: list[FitFailure] = field(default_factory=list)
    dropped: dict = field(default_factory=dict)

    # -------------------------------------------------------- tables
    def _sel(self, model, extra=None):
        r = self.records
        sel = (r.model == model) & np.isfinite(r.forecast)
        return sel if extra is None else sel & extra

    def _metrics(self, sel, scope) -> MetricReport | None:
        r = self.records
        if not sel.any():
            return None
        return compute_metrics(r.forecast[sel], r.measured[sel], r.nominal[sel], scope)

    def overall(self) -> dict[str, MetricReport]:
        return {m: self._metrics(self._sel(m), "overall") for m in self.models}

    def plant_weighted(self) -> dict[str, dict]:
        """Unweighted mean over plants of each per-plant metric."""
        out = {}
        table = self.by_plant()
        for m in self.models:
            rows = [table[p][m] for p in self.plants if table[p][m] is not None]
            out[m] = {k: float(np.mean([getattr(x, k) for x in rows])) if rows else None
                      for k in ("nmae", "nrmse", "mae", "nmbe")}
        return out

    def by_month(self) -> dict[int, dict[str, MetricReport | None]]:
        months = np.array([from_epoch(t).month for t in self.records.ts]) if len(self.records) \
            else np.empty(0, dtype=int)
        return {mo: {m: self._metrics(self._sel(m, months == mo), "month") for m in self.models}
                for mo in range(1, 13)}

    def by_plant(self) -> dict[str, dict[str, MetricReport | None]]:
        r = self.records
        return {p: {m: self._metrics(self._sel(m, r.plant == p), "plant") for m in self.models}
                for p in self.plants}

    def by_csi(self):
        return csi_stratify(self)

    def weekly(self) -> dict[str, list[float | None]]:
        """nMAE per fold (hour-weighted over plants), one entry per fold."""
        r = self.records
        out = {}
        for m in self.models:
            series = []
            for f in self.folds:
                mr = self._metrics(self._sel(m, r.fold == f.index), "overall")
                series.append(None if mr is None else mr.nmae)
            out[m] = series
        return out

    def missing_hours(self) -> dict[str, int]:
        r = self.records
        return {m: int(((r.model == m) & ~np.isfinite(r.forecast)).sum()) for m in self.models}

    # -------------------------------------------------------- persistence
    def metrics_document(self) -> dict:
        def md(x):
            return None if x is None else x.as_dict()
        csi_rows = [{"bucket": b.label, "model": b.model, "n_hours": b.n_hours,
                     "metrics": md(b.metrics)} for b in self.by_csi()]
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "models": list(self.models),
            "plants": list(self.plants),
            "folds": [{"index": f.index, "train_start": format_ts(from_epoch(f.train_start)),
                       "test_start": format_ts(from_epoch(f.test_start)),
                       "test_end": format_ts(from_epoch(f.test_end))} for f in self.folds],
            "overall_hour_weighted": {m: md(v) for m, v in self.overall().items()},
            "overall_plant_weighted": self.plant_weighted(),
            "by_month": {str(mo): {m: md(v) for m, v in row.items()}
                         for mo, row in self.by_month().items()},
            "by_plant": {p: {m: md(v) for m, v in row.items()} for p, row in self.by_plant().items()},
            "by_csi": {"edges": csi_bucket_labels(), "rows": csi_rows},
            "weekly_nmae": self.weekly(),
            "ensemble_weights": [w.__dict__ | {"members": list(w.members)} for w in self.weights],
            "failures": [f.__dict__ for f in self.failures],
            "dropped_hours": self.dropped,
            "missing_hours": self.missing_hours(),
        }

    def hourly_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HOURLY_HEADER)
        r = self.records
        for i in range(len(r)):
            w.writerow([format_ts(from_epoch(r.ts[i])), r.plant[i], r.model[i],
                        "" if not math.isfinite(r.forecast[i]) else format_float(r.forecast[i]),
                        format_float(r.measured[i]), format_float(r.nominal[i]),
                        "" if not math.isfinite(r.csi[i]) else format_float(r.csi[i])])
        return buf.getvalue()

    def weekly_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fold", "test_start"] + list(self.models))
        weekly = self.weekly()
        for k, f in enumerate(self.folds):
            w.writerow([f.index, format_ts(from_epoch(f.test_start))]
                       + ["" if weekly[m][k] is None else format_float(weekly[m][k])
                          for m in self.models])
        return buf.getvalue()

    @classmethod
    def from_files(cls, hourly_csv: Path, metrics_json: Path) -> "BacktestReport":
        """Rebuild a report from its persisted per-hour CSV and metrics document."""
        from ..data import Fold
        doc = json.loads(Path(metrics_json).read_text())
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {doc.get('schema_version')}")
        folds = [Fold(f["index"], epoch(parse_ts(f["train_start"])), epoch(parse_ts(f["test_start"])),
                      epoch(parse_ts(f["test_start"])), epoch(parse_ts(f["test_end"])))
                 for f in doc["folds"]]
        cols = {k: [] for k in HOURLY_HEADER}
        with open(hourly_csv, newline="") as fh:
            reader = csv.reader(fh)
            if next(reader) != HOURLY_HEADER:
                raise ValueError(f"{hourly_csv}: unexpected header")
            for row in reader:
                for k, v in zip(HOURLY_HEADER, row):
                    cols[k].append(v)
        ts = np.array([epoch(parse_ts(t)) for t in cols["ts_utc"]], dtype=np.int64)
        fnum = lambda vals: np.array([float(v) if v != "" else np.nan for v in vals])
        starts = np.array([f.test_start for f in folds], dtype=np.int64)
        fold_idx = np.searchsorted(starts, ts, side="right") - 1
        rec = HourlyRecords(ts, np.array(cols["plant_id"], dtype=object),
                            np.array(cols["model"], dtype=object), fnum(cols["forecast_kw"]),
                            fnum(cols["measured_kw"]), fnum(cols["nominal_kw"]), fnum(cols["csi"]),
                            np.array([folds[i].index for i in fold_idx], dtype=np.int64)
                            if len(folds) else fold_idx)
        weights = [WeightRecord(**(w | {"members": tuple(w["members"])}))
                   for w in doc.get("ensemble_weights", [])]
        failures = [FitFailure(**f) for f in doc.get("failures", [])]
        return cls(tuple(doc["models"]), tuple(doc["plants"]), folds, rec, weights, failures,
                   doc.get("dropped_hours", {}))


# ------------------------------------------------------------ engine

def _predict_clamped(model, test: SampleSet) -> np.ndarray:
    """Clamped forecast for every test hour; night hours are zero without querying the model."""
    out = np.zeros(len(test))
    day = test.daytime
    if day.any():
        sub = test.subset(day)
        raw = np.asarray(model.predict(sub), dtype=float)
        if not np.all(np.isfinite(raw)):
            raise ModelError("model produced non-finite forecasts")
        out[day] = clamp_forecast(raw, sub.nominal_power, sub.features["sun_elevation"])
    return out


def _record(test: SampleSet, model: str, forecast: np.ndarray, fold: int) -> HourlyRecords:
    n = len(test)
    return HourlyRecords(test.timestamps.copy(), np.full(n, test.plant_id, dtype=object),
                         np.full(n, model, dtype=object), forecast,
                         test.measured_power.copy(), test.nominal_power.copy(), test.csi.copy(),
                         np.full(n, fold, dtype=np.int64))


def _build(cfg: BacktestConfig, name: str):
    return make_forecaster(name, cfg.params.get(name), cfg.use_temperature, cfg.seed)


def _plant_backtest(s: SampleSet, folds, cfg: BacktestConfig, parts, weights, failures):
    members = cfg.members
    val_span = int(timedelta(weeks=cfg.validation_weeks).total_seconds())
    t0 = folds[0].test_start
    forecasters = {m: _build(cfg, m) for m in members}

    # out-of-sample member forecasts that the ensemble may be fitted on
    hist_ts, hist_meas, hist_pred = [], [], {m: [] for m in members}
    if "ens" in cfg.models:
        hold = s.window(s.timestamps[0], t0 - val_span)
        target = s.window(t0 - val_span, t0)
        if len(target):
            hist_ts.append(target.timestamps)
            hist_meas.append(target.measured_power)
            for m in members:
                try:
                    fc = _build(cfg, m).fit(hold, now=t0 - val_span)
                    pred = _predict_clamped(fc, target)
                except (ModelError, ValueError, np.linalg.LinAlgError) as exc:
                    failures.append(FitFailure(s.plant_id, -1, m, f"{type(exc).__name__}: {exc}"))
                    pred = np.full(len(target), np.nan)
                hist_pred[m].append(pred)

    for fold in folds:
        train = s.window(fold.train_start, fold.train_end)
        test = s.window(fold.test_start, fold.test_end)
        if len(train) and train.timestamps[-1] >= fold.test_start:
            raise LeakageError(f"fold {fold.index}: training sample at or after test start")
        if not len(test):
            continue
        preds = {}
        for m in members:
            try:
                forecasters[m].fit(train, now=fold.train_end)
                preds[m] = _predict_clamped(forecasters[m], test)
            except (ModelError, ValueError, np.linalg.LinAlgError) as exc:
                failures.append(FitFailure(s.plant_id, fold.index, m, f"{type(exc).__name__}: {exc}"))
                forecasters[m] = _build(cfg, m)
                preds[m] = np.full(len(test), np.nan)
            parts.append(_record(test, m, preds[m], fold.index))

        if "ens" in cfg.models:
            ens = np.full(len(test), np.nan)
            try:
                ens = _ensemble_fold(s.plant_id, fold, members, hist_ts, hist_meas, hist_pred,
                                     val_span, preds, test, weights)
            except (ModelError, ValueError, np.linalg.LinAlgError) as exc:
                failures.append(FitFailure(s.plant_id, fold.index, "ens", f"{type(exc).__name__}: {exc}"))
            parts.append(_record(test, "ens", ens, fold.index))
            hist_ts.append(test.timestamps)
            hist_meas.append(test.measured_power)
            for m in members:
                hist_pred[m].append(preds[m])


def _ensemble_fold(plant, fold, members, hist_ts, hist_meas, hist_pred, val_span, preds, test,
                   weights) -> np.ndarray:
    ts = np.concatenate(hist_ts) if hist_ts else np.empty(0, dtype=np.int64)
    if not len(ts):
        raise ModelError("no validation history for the ensemble")
    y = np.concatenate(hist_meas)
    H = np.column_stack([np.concatenate(hist_pred[m]) for m in members])
    sel = (ts >= fold.test_start - val_span) & (ts < fold.test_start) & np.isfinite(H).all(axis=1)
    H, y = H[sel], y[sel]
    if len(y) < len(members) + 1:
        raise ModelError(f"ensemble validation window holds only {len(y)} complete hours")
    if not np.any(H):
        raise ModelError("all-zero validation predictions")
    w = ens_fit(H, y, members)
    res = H @ w.raw - y
    sse_members = [float(((H[:, k] - y) ** 2).sum()) for k in range(len(members))]
    weights.append(WeightRecord(plant, fold.index, members, w.raw.tolist(), w.normalized.tolist(),
                                int(len(y)), float(res @ res), sse_members))
    out_members = np.column_stack([preds[m] for m in members])
    out = np.full(len(test), np.nan)
    ok = np.isfinite(out_members).all(axis=1)
    out[ok] = clamp_forecast(ens_predict(w, out_members[ok]), test.nominal_power[ok],
                             test.features["sun_elevation"][ok])
    return out


def run_backtest(samples, cfg: BacktestConfig) -> BacktestReport:
    """Expanding-window backtest of every configured model on every plant.

    Members refit each fold on the full history before the fold (the grey
    box on its trailing window) and forecast the fold's hours. The
    ensemble is fitted on member forecasts that were themselves made out
    of sample: an initial holdout over the validation window before the
    first test fold, then the forecasts of earlier folds.
    """
    if isinstance(samples, SampleSet):
        samples = {samples.plant_id: samples}
    samples = {p: s for p, s in sorted(samples.items())}
    if not samples or any(len(s) == 0 for s in samples.values()):
        raise ValueError("every plant needs at least one aligned sample")
    if cfg.initial_train_end is None:
        raise ValueError("initial_train_end is required")
    start = min(int(s.timestamps[0]) for s in samples.values())
    end = max(int(s.timestamps[-1]) for s in samples.values()) + HOUR
    folds = rolling_folds(start, end, epoch(cfg.initial_train_end), cfg.step)

    parts, weights, failures = [], [], []
    for s in samples.values():
        _plant_backtest(s, folds, cfg, parts, weights, failures)
    return BacktestReport(tuple(cfg.models), tuple(samples), folds, HourlyRecords.concat(parts),
                          weights, failures, {p: int(s.dropped) for p, s in samples.items()})


# ------------------------------------------------------------ weather substitution

@dataclass
class SubstitutionResult:
    model: str
    forecast_driven: MetricReport
    measurement_driven: MetricReport
    weekly_forecast: list[float]
    weekly_measured: list[float]
    improvement: float                   # nMAE points, forecast minus measured
    fraction_weeks_better: float
    significance: "object"


def weather_substitution(samples_forecast, samples_measured, cfg: BacktestConfig,
                         model: str | None = None) -> SubstitutionResult:
    """Run the identical backtest on forecast-driven and measurement-driven inputs."""
    if isinstance(samples_forecast, SampleSet):
        samples_forecast = {samples_forecast.plant_id: samples_forecast}
    if isinstance(samples_measured, SampleSet):
        samples_measured = {samples_measured.plant_id: samples_measured}
    if set(samples_forecast) != set(samples_measured):
        raise ValueError("forecast-driven and measurement-driven inputs cover different plants")
    for p in samples_forecast:
        a, b = samples_forecast[p], samples_measured[p]
        if not np.array_equal(a.timestamps, b.timestamps):
            raise ValueError(f"plant {p}: forecast-driven and measurement-driven hours differ")
    model = model or cfg.models[0]
    rep_f = run_backtest(samples_forecast, cfg)
    rep_m = run_backtest(samples_measured, cfg)
    wf = rep_f.weekly()[model]
    wm = rep_m.weekly()[model]
    pairs = [(a, b) for a, b in zip(wf, wm) if a is not None and b is not None]
    fa = np.array([a for a, _ in pairs])
    fb = np.array([b for _, b in pairs])
    try:
        sig = wilcoxon_signed_rank(fa, fb)
    except ValueError:
        sig = None
    of, om = rep_f.overall()[model], rep_m.overall()[model]
    return SubstitutionResult(model, of, om, list(fa), list(fb), of.nmae - om.nmae,
                              float(np.mean(fb < fa)) if len(pairs) else 0.0, sig)
