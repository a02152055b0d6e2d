from datetime import timedelta

import numpy as np
import pytest

from pvbench.eval import BacktestConfig, BacktestReport, compute_metrics, run_backtest
from pvbench.eval import backtest as bt
from pvbench.models import make_forecaster
from pvbench.pipeline import fleet_samples

from conftest import utc

START = utc(2015, 3, 1)
CFG = BacktestConfig(models=("gb", "knn", "ens"), initial_train_end=START + timedelta(weeks=6),
                     params={"knn": {"k": 30}}, validation_weeks=3)


@pytest.fixture(scope="module")
def report(small_dataset):
    return run_backtest(fleet_samples(small_dataset), CFG)


def test_no_training_sample_reaches_test_window(small_dataset, monkeypatch):
    seen = []

    class Spy:
        def __init__(self, inner):
            self.inner = inner

        def fit(self, train, now=None):
            seen.append((int(train.timestamps.max()), now))
            self.inner.fit(train, now)
            return self

        def predict(self, samples):
            seen.append(("predict", int(samples.timestamps.min())))
            return self.inner.predict(samples)

    monkeypatch.setattr(bt, "_build", lambda cfg, name: Spy(make_forecaster(name, cfg.params.get(name))))
    run_backtest(fleet_samples(small_dataset), CFG)
    last_fit = None
    for item in seen:
        if item[0] == "predict":
            assert last_fit < item[1]
        else:
            last_fit = item[0]
            assert item[0] < int(item[1] if isinstance(item[1], (int, np.integer))
                                 else bt.epoch(item[1]))


def test_folds_cover_test_hours_once(report):
    r = report.records
    for m in report.models:
        for p in report.plants:
            sel = (r.model == m) & (r.plant == p)
            assert len(np.unique(r.ts[sel])) == sel.sum()
    assert r.ts.min() >= bt.epoch(CFG.initial_train_end)


def test_aggregations_consistent(report):
    r = report.records
    for m in report.models:
        sel = (r.model == m) & np.isfinite(r.forecast)
        total = np.abs(r.forecast[sel] - r.measured[sel]) / r.nominal[sel]
        months = report.by_month()
        parts = [(mr.nmae, mr.n_hours) for mr in (months[mo][m] for mo in range(1, 13)) if mr]
        pooled = sum(a * n for a, n in parts) / sum(n for _, n in parts)
        assert pooled == pytest.approx(report.overall()[m].nmae, rel=1e-9)
        assert report.overall()[m].nmae == pytest.approx(100 * total.mean(), rel=1e-9)
        plants = report.by_plant()
        pw = np.mean([plants[p][m].nmae for p in report.plants])
        assert report.plant_weighted()[m]["nmae"] == pytest.approx(pw, rel=1e-12)
        buckets = [b for b in report.by_csi() if b.model == m and b.metrics]
        assert sum(b.n_hours for b in buckets) <= report.overall()[m].n_hours


def test_metric_ordering_every_cell(report):
    cells = list(report.overall().values())
    cells += [v for row in report.by_month().values() for v in row.values()]
    cells += [v for row in report.by_plant().values() for v in row.values()]
    cells += [b.metrics for b in report.by_csi()]
    for c in cells:
        if c is not None:
            assert c.nrmse >= c.nmae - 1e-12 and c.nmae >= abs(c.nmbe) - 1e-12


def test_ensemble_dominates_on_every_fold(report):
    assert report.weights
    for w in report.weights:
        assert w.sse_raw <= min(w.sse_members) + 1e-9
        assert sum(w.normalized) == pytest.approx(1.0)


def test_round_trip_and_recompute(report, tmp_path):
    (tmp_path / "hourly.csv").write_text(report.hourly_csv())
    import json
    (tmp_path / "metrics.json").write_text(json.dumps(report.metrics_document()))
    back = BacktestReport.from_files(tmp_path / "hourly.csv", tmp_path / "metrics.json")
    assert back.models == report.models and back.plants == report.plants
    np.testing.assert_array_equal(back.records.fold, report.records.fold)
    for m in report.models:
        a, b = report.overall()[m], back.overall()[m]
        assert b.nmae == pytest.approx(a.nmae, rel=1e-9)
        r = back.records
        sel = (r.model == m) & np.isfinite(r.forecast)
        again = compute_metrics(r.forecast[sel], r.measured[sel], r.nominal[sel])
        assert again.nrmse == pytest.approx(a.nrmse, rel=1e-9)
    for m in report.models:
        a = np.array(report.weekly()[m], dtype=float)
        b = np.array(back.weekly()[m], dtype=float)
        np.testing.assert_allclose(b, a, rtol=1e-9)


def test_failures_are_isolated(small_dataset, monkeypatch):
    class Broken:
        def fit(self, train, now=None):
            raise bt.ModelError("boom")

    real = bt._build
    monkeypatch.setattr(bt, "_build", lambda cfg, name: Broken() if name == "knn" else real(cfg, name))
    rep = run_backtest(fleet_samples(small_dataset), CFG)
    assert rep.overall()["knn"] is None
    assert rep.overall()["gb"] is not None
    assert rep.missing_hours()["knn"] > 0
    assert {f.model for f in rep.failures} >= {"knn"}


def test_config_errors():
    with pytest.raises(ValueError):
        BacktestConfig(models=("gb", "ens"))
    with pytest.raises(ValueError):
        BacktestConfig(models=("xx",))
    with pytest.raises(ValueError):
        run_backtest({}, CFG)
