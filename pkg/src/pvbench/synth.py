"""Synthetic fleets: clear-sky-index weather, erroneous forecasts and PV power.

Every plant draws from its own seeded streams (cloud, temperature,
measurement noise, forecast error), so changing the forecast error
settings never changes the measured truth.
"""
from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import solar
from .data import (HOUR, Dataset, PlantRecord, PowerRecord, ScheduleInterval, WeatherRecord, epoch,
                   from_epoch, write_dataset)

MEASURED_PROVIDER = "satellite"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlantSpec(_Strict):
    plant_id: str = Field(min_length=1)
    name: str = ""
    latitude: float = Field(ge=-90, le=90)
    longitude: float = Field(ge=-180, le=360)
    tilt: float = Field(default=30.0, ge=0, le=90)
    surface_azimuth: float = Field(default=180.0, ge=0, lt=360)
    albedo: float = Field(default=0.2, ge=0, le=1)
    nominal_kw: float = Field(default=1000.0, gt=0)
    c1: float = Field(default=0.9, gt=0)
    c2: float = Field(default=-0.1, lt=0)


class CloudProcess(_Strict):
    rho: float = Field(default=0.9, ge=0, lt=1)
    innovation_sd: float = Field(default=0.1, ge=0)
    mean: float = 0.75
    floor: float = Field(default=0.05, ge=0)
    ceiling: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _bounds(self):
        if self.floor > self.ceiling:
            raise ValueError("CSI floor exceeds ceiling")
        return self


class ForecastError(_Strict):
    provider: str = "nwp"
    bias: float = Field(default=0.0, gt=-1)
    sd: float = Field(default=0.15, ge=0)
    day_correlation: float = Field(default=0.5, ge=0, lt=1)
    # 1 = forecast clouds follow the true cloud process; lower values blend
    # in an independent cloud realisation, so cloudy hours are mispredicted
    cloud_skill: float = Field(default=1.0, ge=0, le=1)


class Temperature(_Strict):
    mean: float = 15.0
    seasonal_amplitude: float = 10.0
    diurnal_amplitude: float = 6.0
    noise_sd: float = Field(default=1.0, ge=0)


class SynthConfig(_Strict):
    plants: list[PlantSpec] = Field(min_length=1)
    start: datetime
    end: datetime
    derate: float = Field(default=0.004, ge=0)
    cloud: CloudProcess = CloudProcess()
    forecast_error: ForecastError = ForecastError()
    second_provider: ForecastError | None = None
    measurement_noise_sd: float = Field(default=0.01, ge=0)
    temperature: Temperature = Temperature()
    missing_forecast_weeks: list[int] = []
    rng_seed: int = 0

    @field_validator("start", "end")
    @classmethod
    def _utc(cls, v: datetime):
        if v.tzinfo is None:
            v = v.replace(tzinfo=timezone.utc)
        v = v.astimezone(timezone.utc)
        if v.minute or v.second or v.microsecond:
            raise ValueError("horizon bounds must be whole hours")
        return v

    @model_validator(mode="after")
    def _horizon(self):
        if self.end - self.start < timedelta(weeks=8):
            raise ValueError("synthetic horizon must span at least 8 weeks")
        ids = [p.plant_id for p in self.plants]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate plant_id in synth config")
        if self.second_provider is not None and \
                self.second_provider.provider == self.forecast_error.provider:
            raise ValueError("the two forecast providers need distinct names")
        return self


# ------------------------------------------------------------ building blocks

def ar1_csi(n: int, cloud: CloudProcess, rng: np.random.Generator) -> np.ndarray:
    """Latent AR(1) series (not yet clipped) started from its stationary law."""
    sd_stat = cloud.innovation_sd / math.sqrt(1 - cloud.rho ** 2)
    eps = rng.standard_normal(n + 1)
    x = np.empty(n)
    prev = cloud.mean + sd_stat * eps[0]
    for t in range(n):
        prev = cloud.mean + cloud.rho * (prev - cloud.mean) + cloud.innovation_sd * eps[t + 1]
        x[t] = prev
    return x


def diffuse_fraction(csi: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - 0.75 * np.asarray(csi, dtype=float), 0.15, 1.0)


def split_irradiance(clear: np.ndarray, csi: np.ndarray):
    ghi = clear * csi
    dhi = diffuse_fraction(csi) * ghi
    return ghi, dhi, ghi - dhi


def error_factors(timestamps, bias: float, sd: float, day_correlation: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Lognormal multiplicative factors with mean 1 + bias and relative sd ``sd``.

    The normal driver mixes a per-day draw (weight ``day_correlation`` on
    the variance) with a per-hour draw.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    n = len(ts)
    day = (ts - ts[0]) // 86400 if n else ts
    z_day = rng.standard_normal(int(day[-1]) + 1 if n else 0)
    z_hour = rng.standard_normal(n)
    if sd == 0:
        return np.full(n, 1.0 + bias)
    z = math.sqrt(day_correlation) * z_day[day] + math.sqrt(1 - day_correlation) * z_hour
    s = math.sqrt(math.log1p(sd * sd))
    return (1.0 + bias) * np.exp(s * z - 0.5 * s * s)


def inject_forecast_error(true_series, bias: float = 0.0, sd: float = 0.0,
                          day_correlation: float = 0.0, seed: int = 0,
                          provider: str = "nwp") -> list[WeatherRecord]:
    """Forecast records from true weather records via one factor per hour.

    The same factor scales ghi, dhi and bhi, so closure and non-negativity
    carry over from the truth.
    """
    if sd < 0:
        raise ValueError("sd must be non-negative")
    if not 0 <= day_correlation < 1:
        raise ValueError("day_correlation must lie in [0, 1)")
    recs = list(true_series)
    ts = np.array([epoch(r.timestamp) for r in recs], dtype=np.int64)
    f = error_factors(ts, bias, sd, day_correlation, np.random.default_rng(seed))
    return [WeatherRecord(r.plant_id, r.timestamp, provider, "forecast", r.ghi * k, r.dhi * k,
                          r.bhi * k, r.temperature) for r, k in zip(recs, f)]


def _streams(seed: int, index: int):
    ss = np.random.SeedSequence([seed, index])
    cloud, temp, noise, fc, fc2 = ss.spawn(5)
    return tuple(np.random.default_rng(s) for s in (cloud, temp, noise, fc, fc2))


def _temperature(ts: np.ndarray, lon: float, lat: float, cfg: Temperature, rng) -> np.ndarray:
    doy = np.array([from_epoch(t).timetuple().tm_yday for t in ts], dtype=float)
    local_hour = ((ts % 86400) / 3600.0 + lon / 15.0) % 24
    season = -math.copysign(1.0, lat) * np.cos(2 * math.pi * (doy - 15) / 365.0)
    diurnal = np.cos(2 * math.pi * (local_hour - 15) / 24.0)
    return (cfg.mean + cfg.seasonal_amplitude * season + cfg.diurnal_amplitude * diurnal
            + cfg.noise_sd * rng.standard_normal(len(ts)))


def _forecast_csi(latent, cloud: CloudProcess, skill: float, rng) -> np.ndarray | None:
    if skill >= 1.0:
        return None
    other = ar1_csi(len(latent), cloud, rng)
    mixed = cloud.mean + skill * (latent - cloud.mean) + math.sqrt(1 - skill ** 2) * (other - cloud.mean)
    return np.clip(mixed, cloud.floor, cloud.ceiling)


def _forecast_records(pid, stamps, ts, clear, truth, temp, latent, cloud, fe, rng,
                      missing):
    csi_f = _forecast_csi(latent, cloud, fe.cloud_skill, rng)
    ghi, dhi, bhi = truth if csi_f is None else split_irradiance(clear, csi_f)
    k = error_factors(ts, fe.bias, fe.sd, fe.day_correlation, rng)
    return [WeatherRecord(pid, stamps[i], fe.provider, "forecast", float(ghi[i] * k[i]),
                          float(dhi[i] * k[i]), float(bhi[i] * k[i]), float(temp[i]))
            for i in range(len(ts)) if not missing[i]]


def generate_plant(spec: PlantSpec, index: int, cfg: SynthConfig):
    """Weather (measured + forecast) and power records for one plant."""
    r_cloud, r_temp, r_noise, r_fc, r_fc2 = _streams(cfg.rng_seed, index)
    t0, t1 = epoch(cfg.start), epoch(cfg.end)
    ts = np.arange(t0, t1, HOUR, dtype=np.int64)
    stamps = [from_epoch(t) for t in ts]
    sun = solar.sun_position(solar.hour_midpoints(ts), spec.latitude, spec.longitude)
    clear = np.asarray(solar.clear_sky_ghi(sun), dtype=float)
    latent = ar1_csi(len(ts), cfg.cloud, r_cloud)
    csi = np.clip(latent, cfg.cloud.floor, cfg.cloud.ceiling)
    ghi, dhi, bhi = split_irradiance(clear, csi)
    temp = _temperature(ts, spec.longitude, spec.latitude, cfg.temperature, r_temp)

    _, tilted = solar.transpose_hourly(ts, ghi, dhi, bhi, spec.latitude, spec.longitude,
                                       spec.tilt, spec.surface_azimuth, spec.albedo)
    g = np.asarray(tilted.gti, dtype=float) / 1000.0
    derate = 1.0 - cfg.derate * np.maximum(0.0, temp - 25.0)
    noise = cfg.measurement_noise_sd * spec.nominal_kw * r_noise.standard_normal(len(ts))
    power = spec.nominal_kw * (spec.c1 * g + spec.c2 * g * g) * derate + noise
    power = np.clip(power, 0.0, spec.nominal_kw)
    power[np.asarray(sun.elevation) <= 0] = 0.0

    week = (ts - t0) // (7 * 86400)
    missing = np.isin(week, np.asarray(cfg.missing_forecast_weeks, dtype=np.int64))

    weather = [WeatherRecord(spec.plant_id, stamps[i], MEASURED_PROVIDER, "measured",
                             float(ghi[i]), float(dhi[i]), float(bhi[i]), float(temp[i]))
               for i in range(len(ts))]
    truth = (ghi, dhi, bhi)
    weather += _forecast_records(spec.plant_id, stamps, ts, clear, truth, temp, latent,
                                 cfg.cloud, cfg.forecast_error, r_fc, missing)
    if cfg.second_provider is not None:
        weather += _forecast_records(spec.plant_id, stamps, ts, clear, truth, temp, latent,
                                     cfg.cloud, cfg.second_provider, r_fc2, missing)
    power_recs = [PowerRecord(spec.plant_id, stamps[i], float(power[i])) for i in range(len(ts))]
    plant = PlantRecord(spec.plant_id, spec.name or spec.plant_id, spec.latitude, spec.longitude,
                        spec.tilt, spec.surface_azimuth, spec.albedo,
                        (ScheduleInterval(cfg.start, cfg.end, spec.nominal_kw),))
    return plant, weather, power_recs


def generate_fleet(cfg: SynthConfig, out_dir=None) -> Dataset:
    """Build the whole fleet in memory and optionally write the four dataset CSVs."""
    plants, weather, power = {}, [], []
    for i, spec in enumerate(cfg.plants):
        plant, w, p = generate_plant(spec, i, cfg)
        plants[plant.plant_id] = plant
        weather += w
        power += p
    ds = Dataset(plants, weather, power)
    if out_dir is not None:
        write_dataset(ds, Path(out_dir))
    return ds


def default_fleet(n_plants: int = 4) -> list[PlantSpec]:
    """Plants spread over southern and central Europe with varied sizes and coefficients."""
    base = [
        ("p01", 37.5, 15.1, 30.0, 180.0, 1000.0, 0.92, -0.11),
        ("p02", 41.9, 12.5, 25.0, 170.0, 750.0, 0.88, -0.08),
        ("p03", 45.4, 9.2, 20.0, 195.0, 1500.0, 0.95, -0.14),
        ("p04", 40.4, -3.7, 35.0, 185.0, 500.0, 0.85, -0.07),
        ("p05", 43.3, 5.4, 15.0, 160.0, 2000.0, 0.90, -0.12),
        ("p06", 38.7, -9.1, 28.0, 200.0, 900.0, 0.93, -0.10),
    ]
    if not 1 <= n_plants <= len(base):
        raise ValueError(f"default fleet has 1..{len(base)} plants")
    return [PlantSpec(plant_id=p, name=f"plant {p[1:]}", latitude=la, longitude=lo, tilt=t,
                      surface_azimuth=az, nominal_kw=kw, c1=c1, c2=c2)
            for p, la, lo, t, az, kw, c1, c2 in base[:n_plants]]
