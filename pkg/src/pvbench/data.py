"""Plant, weather and power records; CSV I/O; provider blending; alignment.

Timestamps are UTC hour starts everywhere. Inside arrays they are int64
POSIX seconds.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import solar

HOUR = 3600
WEEK = timedelta(weeks=1)
POWER_TOLERANCE = 1.05

SCHEMAS = {
    "plants": ["plant_id", "name", "latitude", "longitude", "tilt_deg", "azimuth_deg", "albedo"],
    "availability": ["plant_id", "start_ts", "end_ts", "nominal_kw"],
    "weather": ["plant_id", "ts_utc", "provider", "kind", "ghi_wm2", "dhi_wm2", "bhi_wm2", "temp_c"],
    "power": ["plant_id", "ts_utc", "power_kw"],
}
FILENAMES = {name: f"{name}.csv" for name in SCHEMAS}

ALL_FEATURES = ("gti", "dti", "bti", "sun_azimuth", "sun_elevation", "temperature")


class DataError(ValueError):
    """Malformed or invariant-violating input data."""

    def __init__(self, message, row=None, column=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.row = row
        self.column = column


def parse_ts(text: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp (``Z`` or ``+00:00`` suffix)."""
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None or ts.utcoffset() != timedelta(0):
        raise ValueError(f"timestamp {text!r} is not UTC")
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def epoch(ts: datetime | int | float | np.integer) -> int:
    if isinstance(ts, datetime):
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        return int(ts.timestamp())
    return int(ts)


def from_epoch(seconds) -> datetime:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)


def format_float(x: float | None) -> str:
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------- records

@dataclass(frozen=True)
class ScheduleInterval:
    start: datetime
    end: datetime
    nominal_kw: float


@dataclass(frozen=True)
class AvailabilityRecord:
    plant_id: str
    start: datetime
    end: datetime
    nominal_kw: float


@dataclass(frozen=True)
class PlantRecord:
    plant_id: str
    name: str
    latitude: float
    longitude: float
    tilt: float
    surface_azimuth: float
    albedo: float
    nominal_power_schedule: tuple[ScheduleInterval, ...] = ()

    def with_schedule(self, intervals: Iterable[ScheduleInterval]) -> "PlantRecord":
        ordered = tuple(sorted(intervals, key=lambda iv: iv.start))
        for iv in ordered:
            if not iv.nominal_kw > 0:
                raise DataError(f"plant {self.plant_id}: nominal power must be positive")
            if iv.end <= iv.start:
                raise DataError(f"plant {self.plant_id}: empty availability interval")
        for a, b in zip(ordered, ordered[1:]):
            if b.start < a.end:
                raise DataError(f"plant {self.plant_id}: overlapping availability intervals")
        return PlantRecord(self.plant_id, self.name, self.latitude, self.longitude, self.tilt,
                           self.surface_azimuth, self.albedo, ordered)

    def nominal_at(self, ts) -> float | None:
        t = epoch(ts)
        for iv in self.nominal_power_schedule:
            if epoch(iv.start) <= t < epoch(iv.end):
                return iv.nominal_kw
        return None

    def nominal_series(self, timestamps: np.ndarray) -> np.ndarray:
        """Nominal power per timestamp; NaN where the schedule has a gap."""
        t = np.asarray(timestamps, dtype=np.int64)
        out = np.full(t.shape, np.nan)
        for iv in self.nominal_power_schedule:
            m = (t >= epoch(iv.start)) & (t < epoch(iv.end))
            out[m] = iv.nominal_kw
        return out


@dataclass(frozen=True)
class WeatherRecord:
    plant_id: str
    timestamp: datetime
    provider: str
    kind: str
    ghi: float
    dhi: float
    bhi: float
    temperature: float | None = None


@dataclass(frozen=True)
class PowerRecord:
    plant_id: str
    timestamp: datetime
    power: float


# ---------------------------------------------------------------- CSV I/O

def _float(value: str, row: int, column: str, path, allow_empty=False):
    if value.strip() == "":
        if allow_empty:
            return None
        raise DataError("missing value", row, column, path)
    try:
        x = float(value)
    except ValueError:
        raise DataError(f"not a number: {value!r}", row, column, path) from None
    if not math.isfinite(x):
        raise DataError(f"non-finite value {value!r}", row, column, path)
    return x


def _ts(value: str, row: int, column: str, path, hour_start=True) -> datetime:
    try:
        ts = parse_ts(value)
    except ValueError:
        raise DataError(f"malformed timestamp {value!r}", row, column, path) from None
    if hour_start and (ts.minute or ts.second or ts.microsecond):
        raise DataError(f"timestamp {value!r} is not an hour start", row, column, path)
    return ts


def load_csv(path, schema: str, registry: dict[str, PlantRecord] | None = None) -> list:
    """Parse one of the four dataset files into typed records.

    ``registry`` (plant id -> PlantRecord with schedule) enables the
    cross-file checks: unknown plant ids, power outside any availability
    interval and power above 1.05 x nominal.
    """
    if schema not in SCHEMAS:
        raise ValueError(f"unknown schema {schema!r}")
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file", path=path) from None
        if header != SCHEMAS[schema]:
            raise DataError(f"header {header} does not match {SCHEMAS[schema]}", row=1, path=path)
        parse = {"plants": _plant_row, "availability": _availability_row,
                 "weather": _weather_row, "power": _power_row}[schema]
        records = []
        last_seen: dict[tuple, datetime] = {}
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", rownum, path=path)
            values = dict(zip(header, row))
            rec = parse(values, rownum, path)
            pid = rec.plant_id
            if registry is not None and schema in ("weather", "power", "availability") \
                    and pid not in registry:
                raise DataError(f"unknown plant_id {pid!r}", rownum, "plant_id", path)
            if schema == "weather":
                key = (pid, rec.provider, rec.kind)
                if key in last_seen and rec.timestamp <= last_seen[key]:
                    raise DataError("timestamps not strictly increasing", rownum, "ts_utc", path)
                last_seen[key] = rec.timestamp
            elif schema == "power" and registry is not None:
                nominal = registry[pid].nominal_at(rec.timestamp)
                if nominal is None:
                    raise DataError("no nominal power defined", rownum, "ts_utc", path)
                if rec.power > POWER_TOLERANCE * nominal:
                    raise DataError(f"power {rec.power} exceeds {POWER_TOLERANCE} x nominal "
                                    f"{nominal}", rownum, "power_kw", path)
            records.append(rec)
    return records


def _plant_row(v, row, path) -> PlantRecord:
    lat = _float(v["latitude"], row, "latitude", path)
    lon = _float(v["longitude"], row, "longitude", path)
    tilt = _float(v["tilt_deg"], row, "tilt_deg", path)
    az = _float(v["azimuth_deg"], row, "azimuth_deg", path)
    albedo = _float(v["albedo"], row, "albedo", path)
    if not -90 <= lat <= 90:
        raise DataError("latitude out of range", row, "latitude", path)
    if not -180 <= lon <= 360:
        raise DataError("longitude out of range", row, "longitude", path)
    if not 0 <= tilt <= 90:
        raise DataError("tilt must lie in [0, 90]", row, "tilt_deg", path)
    if not 0 <= az < 360:
        raise DataError("azimuth must lie in [0, 360)", row, "azimuth_deg", path)
    if not 0 <= albedo <= 1:
        raise DataError("albedo must lie in [0, 1]", row, "albedo", path)
    if not v["plant_id"].strip():
        raise DataError("empty plant_id", row, "plant_id", path)
    return PlantRecord(v["plant_id"], v["name"], lat, lon, tilt, az, albedo)


def _availability_row(v, row, path) -> AvailabilityRecord:
    start = _ts(v["start_ts"], row, "start_ts", path)
    end = _ts(v["end_ts"], row, "end_ts", path)
    kw = _float(v["nominal_kw"], row, "nominal_kw", path)
    if kw <= 0:
        raise DataError("nominal power must be positive", row, "nominal_kw", path)
    if end <= start:
        raise DataError("end_ts must follow start_ts", row, "end_ts", path)
    return AvailabilityRecord(v["plant_id"], start, end, kw)


def _weather_row(v, row, path) -> WeatherRecord:
    ts = _ts(v["ts_utc"], row, "ts_utc", path)
    kind = v["kind"]
    if kind not in ("forecast", "measured"):
        raise DataError(f"kind must be forecast or measured, got {kind!r}", row, "kind", path)
    vals = {}
    for col in ("ghi_wm2", "dhi_wm2", "bhi_wm2"):
        x = _float(v[col], row, col, path)
        if x < 0:
            raise DataError(f"negative irradiance {x}", row, col, path)
        vals[col] = x
    if abs(vals["ghi_wm2"] - (vals["dhi_wm2"] + vals["bhi_wm2"])) > 1.0:
        raise DataError("ghi differs from dhi + bhi by more than 1 W/m2", row, "ghi_wm2", path)
    temp = _float(v["temp_c"], row, "temp_c", path, allow_empty=True)
    return WeatherRecord(v["plant_id"], ts, v["provider"], kind, vals["ghi_wm2"],
                         vals["dhi_wm2"], vals["bhi_wm2"], temp)


def _power_row(v, row, path) -> PowerRecord:
    ts = _ts(v["ts_utc"], row, "ts_utc", path)
    p = _float(v["power_kw"], row, "power_kw", path)
    if p < 0:
        raise DataError(f"negative power {p}", row, "power_kw", path)
    return PowerRecord(v["plant_id"], ts, p)


def _rows(records: Sequence, schema: str) -> Iterator[list[str]]:
    for r in records:
        if schema == "plants":
            yield [r.plant_id, r.name, format_float(r.latitude), format_float(r.longitude),
                   format_float(r.tilt), format_float(r.surface_azimuth), format_float(r.albedo)]
        elif schema == "availability":
            yield [r.plant_id, format_ts(r.start), format_ts(r.end), format_float(r.nominal_kw)]
        elif schema == "weather":
            yield [r.plant_id, format_ts(r.timestamp), r.provider, r.kind, format_float(r.ghi),
                   format_float(r.dhi), format_float(r.bhi), format_float(r.temperature)]
        else:
            yield [r.plant_id, format_ts(r.timestamp), format_float(r.power)]


def write_csv(records: Sequence, path, schema: str) -> None:
    """Write records atomically (temp file then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCHEMAS[schema])
        w.writerows(_rows(records, schema))
    os.replace(tmp, path)


def availability_records(plants: Iterable[PlantRecord]) -> list[AvailabilityRecord]:
    return [AvailabilityRecord(p.plant_id, iv.start, iv.end, iv.nominal_kw)
            for p in plants for iv in p.nominal_power_schedule]


@dataclass
class Dataset:
    plants: dict[str, PlantRecord]
    weather: list[WeatherRecord]
    power: list[PowerRecord]

    def weather_for(self, plant_id: str, kind: str, provider: str | None = None):
        return [w for w in self.weather if w.plant_id == plant_id and w.kind == kind
                and (provider is None or w.provider == provider)]

    def providers(self, plant_id: str, kind: str) -> list[str]:
        return sorted({w.provider for w in self.weather if w.plant_id == plant_id and w.kind == kind})

    def power_for(self, plant_id: str):
        return [p for p in self.power if p.plant_id == plant_id]


def load_dataset(directory) -> Dataset:
    """Load plants, availability, weather and power CSVs from a directory."""
    d = Path(directory)
    for name in FILENAMES.values():
        if not (d / name).exists():
            raise DataError(f"missing dataset file {name}", path=d)
    plants = load_csv(d / FILENAMES["plants"], "plants")
    registry = {}
    for p in plants:
        if p.plant_id in registry:
            raise DataError(f"duplicate plant_id {p.plant_id!r}", path=d / FILENAMES["plants"])
        registry[p.plant_id] = p
    avail = load_csv(d / FILENAMES["availability"], "availability", registry)
    by_plant: dict[str, list[ScheduleInterval]] = {pid: [] for pid in registry}
    for a in avail:
        by_plant[a.plant_id].append(ScheduleInterval(a.start, a.end, a.nominal_kw))
    registry = {pid: p.with_schedule(by_plant[pid]) for pid, p in registry.items()}
    weather = load_csv(d / FILENAMES["weather"], "weather", registry)
    power = load_csv(d / FILENAMES["power"], "power", registry)
    return Dataset(registry, weather, power)


def write_dataset(dataset: Dataset, directory) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    plants = list(dataset.plants.values())
    out = []
    for schema, recs in (("plants", plants), ("availability", availability_records(plants)),
                         ("weather", dataset.weather), ("power", dataset.power)):
        path = d / FILENAMES[schema]
        write_csv(recs, path, schema)
        out.append(path)
    return out


# ---------------------------------------------------------------- blending

@dataclass(frozen=True)
class BlendResult:
    records: list[WeatherRecord]
    alpha: float
    calibration_hours: int


def _by_ts(series: Iterable[WeatherRecord]) -> dict[int, WeatherRecord]:
    return {epoch(r.timestamp): r for r in series}


def blend_providers(a: Sequence[WeatherRecord], b: Sequence[WeatherRecord],
                    reference_ghi: Sequence[WeatherRecord],
                    calibration: tuple | None = None, provider: str = "blend") -> BlendResult:
    """Blend two forecast providers with one least-squares weight on GHI.

    ``alpha`` minimises the squared error of ``alpha*a + (1-alpha)*b``
    against the reference GHI over the calibration window (default: every
    common hour) and is clipped to [0, 1]. The same weight is applied to
    all variables, so ghi = dhi + bhi is preserved.
    """
    ma, mb, mr = _by_ts(a), _by_ts(b), _by_ts(reference_ghi)
    plants = {r.plant_id for r in (*a, *b, *reference_ghi)}
    if len(plants) > 1:
        raise DataError(f"series cover several plants: {sorted(plants)}")
    common = sorted(set(ma) & set(mb))
    if not common:
        raise DataError("forecast series do not overlap")
    calib = [t for t in common if t in mr]
    if calibration is not None:
        lo, hi = epoch(calibration[0]), epoch(calibration[1])
        calib = [t for t in calib if lo <= t < hi]
    if not calib:
        raise DataError("no overlap between forecasts and reference")
    if len(mr) < 168 or (calib[-1] - calib[0]) // HOUR + 1 < 168:
        raise DataError("reference series shorter than one week")

    ga = np.array([ma[t].ghi for t in calib])
    gb = np.array([mb[t].ghi for t in calib])
    gr = np.array([mr[t].ghi for t in calib])
    diff = ga - gb
    denom = float(diff @ diff)
    alpha = 0.5 if denom == 0 else float(np.clip(diff @ (gr - gb) / denom, 0.0, 1.0))

    out = []
    for t in common:
        ra, rb = ma[t], mb[t]
        if ra.temperature is not None and rb.temperature is not None:
            temp = alpha * ra.temperature + (1 - alpha) * rb.temperature
        else:
            temp = ra.temperature if ra.temperature is not None else rb.temperature
        out.append(WeatherRecord(
            ra.plant_id, ra.timestamp, provider, ra.kind,
            alpha * ra.ghi + (1 - alpha) * rb.ghi,
            alpha * ra.dhi + (1 - alpha) * rb.dhi,
            alpha * ra.bhi + (1 - alpha) * rb.bhi,
            temp))
    return BlendResult(out, alpha, len(calib))


# ---------------------------------------------------------------- samples

@dataclass(frozen=True)
class HourlySample:
    timestamp: datetime
    features: dict[str, float]
    measured_power: float
    nominal_power: float


@dataclass
class SampleSet:
    """Columnar, timestamp-sorted samples for one plant."""

    plant_id: str
    timestamps: np.ndarray
    features: dict[str, np.ndarray]
    measured_power: np.ndarray
    nominal_power: np.ndarray
    provenance: str = "forecast-driven"
    csi: np.ndarray | None = None
    dropped: int = 0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        n = len(self.timestamps)
        if np.any(np.diff(self.timestamps) <= 0):
            raise DataError("samples must be sorted by timestamp without duplicates")
        self.measured_power = np.asarray(self.measured_power, dtype=float)
        self.nominal_power = np.asarray(self.nominal_power, dtype=float)
        if self.csi is None:
            self.csi = np.full(n, np.nan)
        for name, arr in list(self.features.items()):
            self.features[name] = np.asarray(arr, dtype=float)
            if len(self.features[name]) != n:
                raise DataError(f"feature {name!r} has wrong length")
        if len(self.measured_power) != n or len(self.nominal_power) != n:
            raise DataError("power arrays have wrong length")
        if n and not np.all(self.nominal_power > 0):
            raise DataError("nominal power must be positive")

    def __len__(self) -> int:
        return len(self.timestamps)

    def __iter__(self) -> Iterator[HourlySample]:
        for i in range(len(self)):
            yield self.sample(i)

    def sample(self, i: int) -> HourlySample:
        return HourlySample(from_epoch(self.timestamps[i]),
                            {k: float(v[i]) for k, v in self.features.items()},
                            float(self.measured_power[i]), float(self.nominal_power[i]))

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self.features[n] for n in names]) if len(self) else \
            np.empty((0, len(names)))

    @property
    def daytime(self) -> np.ndarray:
        return self.features["sun_elevation"] > 0

    def subset(self, mask) -> "SampleSet":
        return SampleSet(self.plant_id, self.timestamps[mask],
                         {k: v[mask] for k, v in self.features.items()},
                         self.measured_power[mask], self.nominal_power[mask],
                         self.provenance, self.csi[mask], self.dropped)

    def window(self, start, end) -> "SampleSet":
        """Samples with start <= timestamp < end."""
        lo, hi = np.searchsorted(self.timestamps, [epoch(start), epoch(end)])
        return self.subset(slice(lo, hi))


def align(weather: Sequence[WeatherRecord], power: Sequence[PowerRecord], plant: PlantRecord,
          solar_provider=solar, measured: Sequence[WeatherRecord] | None = None,
          provenance: str = "forecast-driven") -> SampleSet:
    """Join weather and power on common hours and transpose to the panel plane.

    Hours present in only one input are dropped and counted. ``measured``
    (the satellite-style GHI series) attaches a clear-sky index per hour.
    """
    wmap = _by_ts(weather)
    pmap = {epoch(p.timestamp): p for p in power}
    common = np.array(sorted(set(wmap) & set(pmap)), dtype=np.int64)
    if common.size == 0:
        raise DataError(f"plant {plant.plant_id}: weather and power share no hours")
    dropped = len(set(wmap) | set(pmap)) - common.size

    ghi = np.array([wmap[t].ghi for t in common])
    dhi = np.array([wmap[t].dhi for t in common])
    bhi = np.array([wmap[t].bhi for t in common])
    temp = np.array([np.nan if wmap[t].temperature is None else wmap[t].temperature
                     for t in common])
    sun, tilted = solar_provider.transpose_hourly(
        common, ghi, dhi, bhi, plant.latitude, plant.longitude, plant.tilt,
        plant.surface_azimuth, plant.albedo)

    nominal = plant.nominal_series(common)
    if np.any(np.isnan(nominal)):
        bad = from_epoch(common[np.isnan(nominal)][0])
        raise DataError(f"plant {plant.plant_id}: no nominal power defined at {format_ts(bad)}")

    csi = np.full(common.size, np.nan)
    if measured is not None:
        mmap = _by_ts(measured)
        mghi = np.array([mmap[t].ghi if t in mmap else np.nan for t in common])
        clear = solar_provider.clear_sky_ghi(sun)
        csi = solar_provider.clear_sky_index(mghi, clear)
        csi = np.where(np.isnan(mghi), np.nan, csi)

    features = {
        "gti": np.asarray(tilted.gti), "dti": np.asarray(tilted.dti), "bti": np.asarray(tilted.bti),
        "sun_azimuth": np.asarray(sun.azimuth), "sun_elevation": np.asarray(sun.elevation),
        "temperature": temp,
    }
    return SampleSet(plant.plant_id, common, features,
                     np.array([pmap[t].power for t in common]), nominal,
                     provenance, csi, dropped)


# ---------------------------------------------------------------- folds

@dataclass(frozen=True)
class Fold:
    index: int
    train_start: int
    train_end: int
    test_start: int
    test_end: int

    def train_mask(self, timestamps: np.ndarray) -> np.ndarray:
        return (timestamps >= self.train_start) & (timestamps < self.train_end)

    def test_mask(self, timestamps: np.ndarray) -> np.ndarray:
        return (timestamps >= self.test_start) & (timestamps < self.test_end)


def rolling_folds(start, end, initial_train_end, step: timedelta = WEEK) -> list[Fold]:
    """Expanding-window folds over [start, end) with weekly (default) steps.

    Fold i trains on [start, initial_train_end + i*step) and tests on the
    next step; the final fold is truncated at ``end``.
    """
    s, e, t0 = epoch(start), epoch(end), epoch(initial_train_end)
    dt = int(step.total_seconds())
    if dt <= 0:
        raise ValueError("step must be positive")
    if not s < t0 < e:
        raise ValueError("initial_train_end must lie strictly inside the sample range")
    if dt > e - t0:
        raise ValueError("step is larger than the remaining test span")
    folds = []
    i = 0
    while t0 + i * dt < e:
        lo = t0 + i * dt
        folds.append(Fold(i, s, lo, lo, min(lo + dt, e)))
        i += 1
    return folds


def split_rolling(samples: SampleSet, initial_train_end, step: timedelta = WEEK) -> list[Fold]:
    if len(samples) == 0:
        raise ValueError("empty sample set")
    start = int(samples.timestamps[0])
    end = int(samples.timestamps[-1]) + HOUR
    t0 = epoch(initial_train_end)
    if t0 >= int(samples.timestamps[-1]):
        raise ValueError("initial_train_end must lie strictly inside the sample range")
    return rolling_folds(start, end, t0, step)
