"""Sun geometry, clear-sky irradiance and tilted-plane transposition.

All functions accept scalars or numpy arrays and broadcast. Timestamps are
POSIX seconds (UTC) or anything :func:`to_epoch_seconds` understands.
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

# Solar elevation below which beam recovery (DNI = BHI / sin(el)) is clamped.
ELEVATION_FLOOR_DEG = 5.0
# Clear-sky GHI below which the clear-sky index is undefined.
CSI_NIGHT_THRESHOLD = 5.0
CSI_CAP = 1.5
SOLAR_CONSTANT = 1367.0

# Perez et al. (1990) all-sites composite coefficients, one row per
# clearness bin: (f11, f12, f13) and (f21, f22, f23).
PEREZ_F1 = np.array([
    [-0.008, 0.588, -0.062],
    [0.130, 0.683, -0.151],
    [0.330, 0.487, -0.221],
    [0.568, 0.187, -0.295],
    [0.873, -0.392, -0.362],
    [1.132, -1.237, -0.412],
    [1.060, -1.600, -0.359],
    [0.678, -0.327, -0.250],
])
PEREZ_F2 = np.array([
    [-0.060, 0.072, -0.022],
    [-0.019, 0.066, -0.029],
    [0.055, -0.064, -0.026],
    [0.109, -0.152, -0.014],
    [0.226, -0.462, 0.001],
    [0.288, -0.823, 0.056],
    [0.264, -1.127, 0.131],
    [0.156, -1.377, 0.251],
])
# Upper edges of clearness bins 1..7; bin 8 is open-ended.
PEREZ_EPSILON_EDGES = np.array([1.065, 1.230, 1.500, 1.950, 2.800, 4.500, 6.200])
PEREZ_KAPPA = 1.041


@dataclass(frozen=True)
class SunPosition:
    """Azimuth clockwise from North and elevation, both in degrees."""

    azimuth: np.ndarray | float
    elevation: np.ndarray | float

    @property
    def zenith(self):
        return 90.0 - np.asarray(self.elevation)


@dataclass(frozen=True)
class TiltedIrradiance:
    gti: np.ndarray | float
    dti: np.ndarray | float
    bti: np.ndarray | float
    ground_reflected: np.ndarray | float


def to_epoch_seconds(ts) -> np.ndarray:
    """Convert datetimes, datetime64 or numbers to float POSIX seconds."""
    if isinstance(ts, datetime):
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        return np.float64(ts.timestamp())
    arr = np.asarray(ts)
    if np.issubdtype(arr.dtype, np.datetime64):
        return arr.astype("datetime64[s]").astype(np.int64).astype(np.float64)
    if arr.dtype == object:
        return np.array([to_epoch_seconds(t) for t in arr.ravel()]).reshape(arr.shape)
    return arr.astype(np.float64)


def sun_position(timestamp, latitude, longitude) -> SunPosition:
    """Low-precision solar position (Michalsky 1988, Astronomical Almanac).

    Stated accuracy is about 0.01 degrees for 1950-2050. Elevation is
    geometric (no refraction correction).
    """
    t = to_epoch_seconds(timestamp)
    lat = np.radians(np.asarray(latitude, dtype=float))
    jd = t / 86400.0 + 2440587.5
    n = jd - 2451545.0

    mean_lon = np.mod(280.460 + 0.9856474 * n, 360.0)
    mean_anom = np.radians(np.mod(357.528 + 0.9856003 * n, 360.0))
    ecl_lon = np.radians(mean_lon + 1.915 * np.sin(mean_anom) + 0.020 * np.sin(2 * mean_anom))
    obliq = np.radians(23.439 - 0.0000004 * n)

    ra = np.arctan2(np.cos(obliq) * np.sin(ecl_lon), np.cos(ecl_lon))
    dec = np.arcsin(np.sin(obliq) * np.sin(ecl_lon))

    hour_utc = np.mod(t, 86400.0) / 3600.0
    gmst = np.mod(6.697375 + 0.0657098242 * n + hour_utc, 24.0)
    lmst = np.mod(gmst + np.asarray(longitude, dtype=float) / 15.0, 24.0)
    ha = np.radians(lmst * 15.0) - ra
    ha = np.mod(ha + np.pi, 2 * np.pi) - np.pi

    sin_el = np.sin(dec) * np.sin(lat) + np.cos(dec) * np.cos(lat) * np.cos(ha)
    el = np.arcsin(np.clip(sin_el, -1.0, 1.0))
    az = np.arctan2(-np.cos(dec) * np.sin(ha),
                    np.sin(dec) * np.cos(lat) - np.cos(dec) * np.sin(lat) * np.cos(ha))
    az = np.mod(np.degrees(az), 360.0)
    el = np.degrees(el)
    if np.ndim(el) == 0:
        return SunPosition(float(az), float(el))
    return SunPosition(az, el)


def extraterrestrial_normal(timestamp) -> np.ndarray | float:
    """Extraterrestrial normal irradiance with the Spencer (1971) eccentricity."""
    t = to_epoch_seconds(timestamp)
    doy = np.floor(np.mod(t / 86400.0 + 2440587.5 - 2451544.5, 365.2422)) + 1
    b = 2 * np.pi * (doy - 1) / 365.0
    r = (1.00011 + 0.034221 * np.cos(b) + 0.00128 * np.sin(b)
         + 0.000719 * np.cos(2 * b) + 0.000077 * np.sin(2 * b))
    return SOLAR_CONSTANT * r


def clear_sky_ghi(sun: SunPosition):
    """Haurwitz clear-sky GHI in W/m2; zero when the sun is below the horizon."""
    el = np.asarray(sun.elevation, dtype=float)
    cz = np.sin(np.radians(el))
    with np.errstate(divide="ignore", invalid="ignore"):
        ghi = np.where(el > 0, 1098.0 * cz * np.exp(-0.059 / np.where(el > 0, cz, 1.0)), 0.0)
    return float(ghi) if ghi.ndim == 0 else ghi


def relative_airmass(zenith_deg):
    """Kasten and Young (1989) relative airmass."""
    z = np.asarray(zenith_deg, dtype=float)
    zc = np.minimum(z, 90.0)
    return 1.0 / (np.cos(np.radians(zc)) + 0.50572 * (96.07995 - zc) ** -1.6364)


def cos_incidence(sun: SunPosition, tilt, surface_azimuth):
    """Cosine of the angle of incidence between the beam and the panel normal."""
    zen = np.radians(90.0 - np.asarray(sun.elevation, dtype=float))
    saz = np.radians(np.asarray(sun.azimuth, dtype=float))
    beta = np.radians(np.asarray(tilt, dtype=float))
    gam = np.radians(np.asarray(surface_azimuth, dtype=float))
    return (np.cos(zen) * np.cos(beta)
            + np.sin(zen) * np.sin(beta) * np.cos(saz - gam))


def perez_diffuse(dhi, dni, sun: SunPosition, tilt, surface_azimuth, dni_extra=SOLAR_CONSTANT):
    """Sky-diffuse irradiance on a tilted plane from the Perez 1990 model."""
    dhi = np.asarray(dhi, dtype=float)
    dni = np.asarray(dni, dtype=float)
    zen_deg = 90.0 - np.asarray(sun.elevation, dtype=float)
    z = np.radians(zen_deg)
    am = relative_airmass(zen_deg)
    delta = dhi * am / dni_extra
    kz3 = PEREZ_KAPPA * z ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(dhi > 0, ((dhi + dni) / np.where(dhi > 0, dhi, 1.0) + kz3) / (1 + kz3), np.inf)
    ebin = np.searchsorted(PEREZ_EPSILON_EDGES, eps, side="right")
    f1c = PEREZ_F1[ebin]
    f2c = PEREZ_F2[ebin]
    f1 = np.maximum(f1c[..., 0] + f1c[..., 1] * delta + f1c[..., 2] * z, 0.0)
    f2 = f2c[..., 0] + f2c[..., 1] * delta + f2c[..., 2] * z

    a = np.maximum(cos_incidence(sun, tilt, surface_azimuth), 0.0)
    b = np.maximum(np.cos(z), np.cos(np.radians(85.0)))
    beta = np.radians(np.asarray(tilt, dtype=float))
    term1 = 0.5 * (1 - f1) * (1 + np.cos(beta))
    term2 = f1 * a / b
    term3 = f2 * np.sin(beta)
    return np.maximum(dhi * (term1 + term2 + term3), 0.0)


def perez_transpose(ghi, dhi, bhi, sun: SunPosition, tilt, surface_azimuth, albedo,
                    dni_extra=SOLAR_CONSTANT) -> TiltedIrradiance:
    """Transpose horizontal global/diffuse/beam irradiance onto a tilted plane.

    Beam normal irradiance is recovered as ``bhi / max(sin(el), sin(5 deg))``.
    A horizontal plane (tilt 0) is returned unchanged; below the horizon all
    components are zero.
    """
    ghi = np.asarray(ghi, dtype=float)
    dhi = np.asarray(dhi, dtype=float)
    bhi = np.asarray(bhi, dtype=float)
    tilt_a = np.asarray(tilt, dtype=float)
    el = np.asarray(sun.elevation, dtype=float)
    day = el > 0

    sin_el = np.maximum(np.sin(np.radians(el)), np.sin(np.radians(ELEVATION_FLOOR_DEG)))
    dni = bhi / sin_el
    bti = dni * np.maximum(cos_incidence(sun, tilt, surface_azimuth), 0.0)
    dti = perez_diffuse(dhi, dni, sun, tilt, surface_azimuth, dni_extra)
    ground = ghi * np.asarray(albedo, dtype=float) * (1 - np.cos(np.radians(tilt_a))) / 2

    flat = tilt_a == 0
    bti = np.where(flat, bhi, bti)
    dti = np.where(flat, dhi, dti)
    ground = np.where(flat, 0.0, ground)

    bti = np.where(day, bti, 0.0)
    dti = np.where(day, dti, 0.0)
    ground = np.where(day, ground, 0.0)
    gti = bti + dti + ground
    if gti.ndim == 0:
        return TiltedIrradiance(float(gti), float(dti), float(bti), float(ground))
    return TiltedIrradiance(gti, dti, bti, ground)


def clear_sky_index(measured_ghi, clear_ghi):
    """Measured over clear-sky GHI, capped at 1.5; NaN where clear-sky < 5 W/m2."""
    m = np.asarray(measured_ghi, dtype=float)
    c = np.asarray(clear_ghi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        csi = np.where(c >= CSI_NIGHT_THRESHOLD, np.minimum(m / c, CSI_CAP), np.nan)
    return float(csi) if csi.ndim == 0 else csi


def hour_midpoints(hour_starts) -> np.ndarray:
    """Sun geometry for an hourly average is evaluated at the half hour."""
    return to_epoch_seconds(hour_starts) + 1800.0


def transpose_hourly(timestamps, ghi, dhi, bhi, latitude, longitude, tilt, surface_azimuth,
                     albedo):
    """Sun angles and tilted irradiance for hour-start timestamps.

    Shared by alignment and the synthetic generator so both see the same
    geometry.
    """
    mid = hour_midpoints(timestamps)
    sun = sun_position(mid, latitude, longitude)
    tilted = perez_transpose(ghi, dhi, bhi, sun, tilt, surface_azimuth, albedo,
                             dni_extra=extraterrestrial_normal(mid))
    return sun, tilted
