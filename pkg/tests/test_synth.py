from datetime import timedelta

import numpy as np
import pytest

from pvbench.data import epoch, load_dataset
from pvbench.eval import BacktestConfig, run_backtest
from pvbench.models import gb_fit
from pvbench.pipeline import fleet_samples
from pvbench.synth import (CloudProcess, SynthConfig, ar1_csi, default_fleet, error_factors,
                           generate_fleet, inject_forecast_error)

from conftest import hourly, synth_config, utc, weather


def _truth(n=24 * 400):
    stamps = hourly(utc(2015, 1, 1), n)
    ghi = 400 + 300 * np.sin(np.arange(n) / 7.0)
    return weather("p01", stamps, ghi, kind="measured")


def test_zero_sd_is_identity():
    truth = _truth(200)
    fc = inject_forecast_error(truth, sd=0.0, seed=3)
    assert [(r.ghi, r.dhi, r.bhi) for r in fc] == [(r.ghi, r.dhi, r.bhi) for r in truth]
    assert all(r.kind == "forecast" for r in fc)


def test_bias_scales():
    truth = _truth(100)
    fc = inject_forecast_error(truth, bias=0.1, seed=0)
    np.testing.assert_allclose([f.ghi for f in fc], [1.1 * t.ghi for t in truth], rtol=1e-12)


def test_error_moments_and_day_correlation():
    ts = np.arange(0, 3600 * 24 * 4000, 3600, dtype=np.int64)
    f = error_factors(ts, 0.0, 0.2, 0.0, np.random.default_rng(0))
    assert f.mean() == pytest.approx(1.0, abs=0.01)
    assert f.std() == pytest.approx(0.2, abs=0.01)
    g = error_factors(ts, 0.0, 0.2, 0.5, np.random.default_rng(1))
    assert g.std() == pytest.approx(0.2, abs=0.01)
    z = np.log(g).reshape(-1, 24)
    within = np.corrcoef(z[:, 3], z[:, 17])[0, 1]
    assert within == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        inject_forecast_error(_truth(10), sd=-1)
    with pytest.raises(ValueError):
        inject_forecast_error(_truth(10), day_correlation=1.0)


@pytest.mark.parametrize("rho", [0.5, 0.9])
def test_cloud_process_acf(rho):
    x = ar1_csi(50_000, CloudProcess(rho=rho), np.random.default_rng(2))
    x = x - x.mean()
    assert (x[1:] @ x[:-1]) / (x @ x) == pytest.approx(rho, abs=0.05)


def test_clear_sky_csi_is_one():
    cloud = CloudProcess(mean=1.0, innovation_sd=0.0, floor=0.05, ceiling=1.5)
    cfg = synth_config(n_plants=1, weeks=8, cloud=cloud, measurement_noise_sd=0.0)
    s = fleet_samples(generate_fleet(cfg))["p01"]
    csi = s.csi[np.isfinite(s.csi)]
    assert len(csi) > 100
    assert np.all(np.abs(csi - 1.0) <= 0.02)


def test_fleet_invariants_and_determinism(small_dataset, tmp_path):
    ds = small_dataset
    noms = {p: ds.plants[p].nominal_power_schedule[0].nominal_kw for p in ds.plants}
    assert all(0.0 <= r.power <= noms[r.plant_id] for r in ds.power)
    for w in ds.weather:
        assert w.ghi >= 0 and w.dhi >= 0 and w.bhi >= 0
        assert abs(w.ghi - w.dhi - w.bhi) <= 1e-6 * max(1.0, w.ghi)
    s = fleet_samples(ds)
    for ss in s.values():
        assert np.all(ss.measured_power[ss.features["sun_elevation"] <= -1.0] == 0.0)
    again = generate_fleet(synth_config(n_plants=2, weeks=12, sd=0.15, day_correlation=0.5, seed=5),
                           tmp_path)
    assert again.power == ds.power and again.weather == ds.weather
    loaded = load_dataset(tmp_path)
    assert sorted(loaded.plants) == sorted(ds.plants)
    assert len(loaded.weather) == len(ds.weather)
    assert [r.power for r in loaded.power] == pytest.approx([r.power for r in ds.power], rel=1e-9)


def test_missing_weeks_and_second_provider():
    from pvbench.synth import ForecastError
    cfg = synth_config(n_plants=1, weeks=8, missing_forecast_weeks=[2],
                       second_provider=ForecastError(provider="alt", sd=0.3))
    ds = generate_fleet(cfg)
    assert ds.providers("p01", "forecast") == ["alt", "nwp"]
    fc = ds.weather_for("p01", "forecast", "nwp")
    assert len(fc) == 24 * 7 * 7
    with pytest.raises(ValueError):
        synth_config(n_plants=1, weeks=4)


def test_inverse_crime_noise_free():
    """Noise-free fleet generated from known (c1, c2): exact recovery and ~zero backtest error."""
    cfg = synth_config(n_plants=2, weeks=16, sd=0.0, measurement_noise_sd=0.0, derate=0.0)
    samples = fleet_samples(generate_fleet(cfg))
    for spec in cfg.plants:
        m = gb_fit(samples[spec.plant_id])
        assert m.c1 == pytest.approx(spec.c1, rel=1e-8)
        assert m.c2 == pytest.approx(spec.c2, rel=1e-8)
    rep = run_backtest(samples, BacktestConfig(models=("gb",),
                                               initial_train_end=cfg.start + timedelta(weeks=8)))
    assert rep.overall()["gb"].nmae < 0.1
