from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from pvbench.data import (PlantRecord, PowerRecord, SampleSet, ScheduleInterval, WeatherRecord,
                          epoch)
from pvbench.synth import ForecastError, PlantSpec, SynthConfig, generate_fleet

UTC = timezone.utc


def utc(*args) -> datetime:
    return datetime(*args, tzinfo=UTC)


def plant(pid="p1", tilt=30.0, az=180.0, albedo=0.2, nominal=1000.0, lat=45.0, lon=10.0,
          start=utc(2014, 1, 1), end=utc(2018, 1, 1)) -> PlantRecord:
    return PlantRecord(pid, pid, lat, lon, tilt, az, albedo,
                       (ScheduleInterval(start, end, nominal),))


def hourly(start: datetime, n: int) -> list[datetime]:
    return [start + timedelta(hours=i) for i in range(n)]


def weather(pid, stamps, ghi, dhi=None, provider="nwp", kind="forecast", temp=15.0):
    ghi = np.broadcast_to(np.asarray(ghi, dtype=float), (len(stamps),))
    dhi = ghi * 0.3 if dhi is None else np.broadcast_to(np.asarray(dhi, dtype=float), ghi.shape)
    return [WeatherRecord(pid, t, provider, kind, float(g), float(d), float(g - d), temp)
            for t, g, d in zip(stamps, ghi, dhi)]


def power(pid, stamps, values):
    values = np.broadcast_to(np.asarray(values, dtype=float), (len(stamps),))
    return [PowerRecord(pid, t, float(v)) for t, v in zip(stamps, values)]


def sample_set(X: dict, y, nominal=1000.0, start=utc(2015, 6, 1), pid="p1", csi=None):
    n = len(y)
    ts = np.array([epoch(start) + 3600 * i for i in range(n)], dtype=np.int64)
    feats = {k: np.asarray(v, dtype=float) for k, v in X.items()}
    feats.setdefault("sun_elevation", np.full(n, 30.0))
    for k in ("gti", "dti", "bti", "sun_azimuth", "temperature"):
        feats.setdefault(k, np.zeros(n))
    return SampleSet(pid, ts, feats, np.asarray(y, dtype=float), np.full(n, nominal), csi=csi)


def synth_config(n_plants=2, weeks=12, sd=0.0, day_correlation=0.0, seed=0, **kw) -> SynthConfig:
    from pvbench.synth import default_fleet
    start = utc(2015, 3, 1)
    return SynthConfig(plants=default_fleet(n_plants), start=start,
                       end=start + timedelta(weeks=weeks),
                       forecast_error=ForecastError(sd=sd, day_correlation=day_correlation),
                       rng_seed=seed, **kw)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_fleet(synth_config(n_plants=2, weeks=12, sd=0.15, day_correlation=0.5, seed=5))


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
