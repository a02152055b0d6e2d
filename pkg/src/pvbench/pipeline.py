"""Dataset -> per-plant sample sets, choosing which weather drives the models."""
from __future__ import annotations

from .data import DataError, Dataset, SampleSet, align, blend_providers


def plant_samples(ds: Dataset, plant_id: str, source: str = "forecast", provider: str | None = None,
                  blend_calibration: tuple | None = None) -> SampleSet:
    """Aligned samples for one plant.

    ``source="forecast"`` uses the forecast weather (blending two
    providers when present and no provider is named); ``"measured"``
    feeds the measured weather itself, for the substitution experiment.
    The measured GHI always supplies the clear-sky index.
    """
    plant = ds.plants[plant_id]
    measured = ds.weather_for(plant_id, "measured")
    power = ds.power_for(plant_id)
    if source == "measured":
        if not measured:
            raise DataError(f"plant {plant_id}: no measured weather")
        return align(measured, power, plant, measured=measured, provenance="measurement-driven")
    if source != "forecast":
        raise ValueError(f"unknown weather source {source!r}")
    providers = ds.providers(plant_id, "forecast")
    if not providers:
        raise DataError(f"plant {plant_id}: no forecast weather")
    if provider is not None:
        if provider not in providers:
            raise DataError(f"plant {plant_id}: unknown forecast provider {provider!r}")
        weather = ds.weather_for(plant_id, "forecast", provider)
    elif len(providers) == 1:
        weather = ds.weather_for(plant_id, "forecast", providers[0])
    elif len(providers) == 2:
        a = ds.weather_for(plant_id, "forecast", providers[0])
        b = ds.weather_for(plant_id, "forecast", providers[1])
        weather = blend_providers(a, b, measured, blend_calibration).records
    else:
        raise DataError(f"plant {plant_id}: name one of the forecast providers {providers}")
    return align(weather, power, plant, measured=measured or None)


def fleet_samples(ds: Dataset, source: str = "forecast", provider: str | None = None,
                  blend_calibration: tuple | None = None) -> dict[str, SampleSet]:
    return {pid: plant_samples(ds, pid, source, provider, blend_calibration)
            for pid in sorted(ds.plants)}
