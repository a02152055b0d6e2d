import numpy as np
import pandas as pd
import pvlib
import pytest

from pvbench import solar
from pvbench.solar import SunPosition

from conftest import utc


def _max_elevation(day, lat, lon):
    t = solar.to_epoch_seconds(day) + 60.0 * np.arange(24 * 60)
    return solar.sun_position(t, lat, lon).elevation.max()


def test_sun_position_against_pvlib():
    rng = np.random.default_rng(0)
    t0, t1 = utc(2014, 1, 1).timestamp(), utc(2018, 1, 1).timestamp()
    t = rng.uniform(t0, t1, 400)
    lat = rng.uniform(-60, 70, 400)
    lon = rng.uniform(-180, 180, 400)
    ours = solar.sun_position(t, lat, lon)
    for i in range(len(t)):
        ref = pvlib.solarposition.get_solarposition(pd.DatetimeIndex([pd.Timestamp(t[i], unit="s", tz="UTC")]),
                                                    lat[i], lon[i], method="nrel_numpy")
        assert abs(ours.elevation[i] - ref["elevation"].iloc[0]) < 0.5
        if ref["elevation"].iloc[0] > 1 and ref["elevation"].iloc[0] < 85:
            d = (ours.azimuth[i] - ref["azimuth"].iloc[0] + 180) % 360 - 180
            assert abs(d) < 0.5


def test_sun_position_examples():
    assert _max_elevation(utc(2015, 3, 20), 0.0, 0.0) == pytest.approx(90.0, abs=1.0)
    el = solar.sun_position(solar.to_epoch_seconds(utc(2015, 3, 20, 12)), 90.0, 0.0).elevation
    assert el == pytest.approx(0.0, abs=1.0)
    assert _max_elevation(utc(2015, 6, 21), 45.0, 0.0) == pytest.approx(68.44, abs=1.0)


def test_sun_position_bounds_and_noon_above_midnight():
    t = solar.to_epoch_seconds(utc(2015, 1, 1)) + 3600.0 * np.arange(24 * 365)
    sp = solar.sun_position(t, 40.0, 0.0)
    assert np.all((sp.azimuth >= 0) & (sp.azimuth < 360))
    assert np.all(np.abs(sp.elevation) <= 90)
    daily = sp.elevation.reshape(365, 24)
    assert np.all(daily[:, 12] > daily[:, 0])


def test_clear_sky_examples_and_oracle():
    assert solar.clear_sky_ghi(SunPosition(180.0, -10.0)) == 0.0
    assert solar.clear_sky_ghi(SunPosition(180.0, 90.0)) == pytest.approx(1098 * np.exp(-0.059), abs=1)
    el = np.arange(1.0, 90.5, 1.0)
    ghi = solar.clear_sky_ghi(SunPosition(np.zeros_like(el), el))
    assert np.all(np.diff(ghi) > 0) and ghi.max() <= 1100
    ref = pvlib.clearsky.haurwitz(pd.Series(90.0 - el))["ghi"].to_numpy()
    np.testing.assert_allclose(ghi, ref, rtol=1e-9)


def test_tilt_zero_identity():
    sun = SunPosition(np.array([120.0, 200.0]), np.array([20.0, 50.0]))
    tr = solar.perez_transpose([500.0, 800.0], [200.0, 100.0], [300.0, 700.0], sun, 0.0, 180.0, 0.3)
    np.testing.assert_allclose(tr.gti, [500.0, 800.0], atol=1e-6)
    np.testing.assert_allclose(tr.bti, [300.0, 700.0])
    np.testing.assert_allclose(tr.dti, [200.0, 100.0])


def test_pure_beam_normal_to_panel():
    sun = SunPosition(180.0, 50.0)
    dni = 800.0
    bhi = dni * np.sin(np.radians(50.0))
    tr = solar.perez_transpose(bhi, 0.0, bhi, sun, 40.0, 180.0, 0.0)
    assert tr.gti == pytest.approx(dni, abs=1e-6)


def _pvlib_perez(ghi, dhi, bhi, el, az, tilt, surf_az, albedo, dni_extra=solar.SOLAR_CONSTANT):
    zen = 90.0 - el
    dni = bhi / max(np.sin(np.radians(el)), np.sin(np.radians(5.0)))
    am = pvlib.atmosphere.get_relative_airmass(zen, model="kastenyoung1989")
    sky = pvlib.irradiance.perez(tilt, surf_az, dhi, dni, dni_extra, zen, az, am,
                                 model="allsitescomposite1990")
    aoi = pvlib.irradiance.aoi(tilt, surf_az, zen, az)
    beam = dni * max(np.cos(np.radians(aoi)), 0.0)
    ground = pvlib.irradiance.get_ground_diffuse(tilt, ghi, albedo)
    return float(beam + sky + ground), float(sky)


def test_perez_fixture_against_pvlib():
    sun = SunPosition(180.0, 35.0)
    tr = solar.perez_transpose(600.0, 200.0, 400.0, sun, 30.0, 180.0, 0.2)
    gti, sky = _pvlib_perez(600.0, 200.0, 400.0, 35.0, 180.0, 30.0, 180.0, 0.2)
    assert tr.gti == pytest.approx(gti, abs=1.0)
    assert tr.dti == pytest.approx(sky, abs=1.0)


def test_perez_random_against_pvlib():
    rng = np.random.default_rng(1)
    for _ in range(200):
        el, az = rng.uniform(6, 85), rng.uniform(60, 300)
        tilt, saz = rng.uniform(1, 60), rng.uniform(90, 270)
        ghi = rng.uniform(20, 1000)
        dhi = ghi * rng.uniform(0.1, 1.0)
        tr = solar.perez_transpose(ghi, dhi, ghi - dhi, SunPosition(az, el), tilt, saz, 0.2)
        gti, _ = _pvlib_perez(ghi, dhi, ghi - dhi, el, az, tilt, saz, 0.2)
        assert tr.gti == pytest.approx(gti, abs=1.0)


def test_energy_closure_and_non_negativity():
    rng = np.random.default_rng(2)
    n = 5000
    sun = SunPosition(rng.uniform(0, 360, n), rng.uniform(-20, 90, n))
    ghi = rng.uniform(0, 1100, n)
    dhi = ghi * rng.uniform(0, 1, n)
    tr = solar.perez_transpose(ghi, dhi, ghi - dhi, sun, rng.uniform(0, 90, n),
                               rng.uniform(0, 360, n), rng.uniform(0, 1, n))
    np.testing.assert_allclose(tr.gti, tr.bti + tr.dti + tr.ground_reflected, atol=1e-6)
    for c in (tr.gti, tr.dti, tr.bti, tr.ground_reflected):
        assert np.all(c >= 0)
    night = sun.elevation <= 0
    assert np.all(tr.gti[night] == 0)


def test_continuity_in_elevation():
    el = np.linspace(8, 80, 300)
    a = solar.perez_transpose(700.0, 150.0, 550.0, SunPosition(170.0, el), 30.0, 180.0, 0.2)
    b = solar.perez_transpose(700.0, 150.0, 550.0, SunPosition(170.0, el + 0.01), 30.0, 180.0, 0.2)
    assert np.max(np.abs(a.gti - b.gti)) < 5.0


def test_clear_sky_index_examples():
    assert solar.clear_sky_index(800.0, 800.0) == 1.0
    assert solar.clear_sky_index(0.0, 500.0) == 0.0
    assert np.isnan(solar.clear_sky_index(10.0, 0.0))
    assert np.isnan(solar.clear_sky_index(3.0, 4.9))
    assert solar.clear_sky_index(900.0, 100.0) == solar.CSI_CAP
