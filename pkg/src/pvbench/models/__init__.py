"""Forecasting models and the registry that builds them by name."""
from .base import (ConvergenceError, Forecaster, InsufficientDataError, MinMaxScaler,
                   ModelError, clamp_forecast)
from .ensemble import EnsembleError, EnsembleWeights, ens_fit, ens_predict
from .greybox import GBModel, GreyBoxForecaster, RankDeficientError, gb_fit, gb_predict
from .knn import KnnConfig, KnnForecaster, knn_predict
from .nn import NnConfig, NnForecaster
from .qrf import QrfConfig, QrfForecaster
from .snapshot import load_model, save_model
from .svr import SvrConfig, SvrForecaster

BASE_MODELS = ("gb", "nn", "knn", "qrf", "svr")
ALL_MODELS = BASE_MODELS + ("ens",)

_CONFIGS = {"knn": KnnConfig, "qrf": QrfConfig, "svr": SvrConfig, "nn": NnConfig}
_CLASSES = {"knn": KnnForecaster, "qrf": QrfForecaster, "svr": SvrForecaster,
            "nn": NnForecaster}


def make_forecaster(name: str, params: dict | None = None, use_temperature: bool = False,
                    seed: int | None = None) -> Forecaster:
    """Build a base model from its short name and optional hyperparameter overrides."""
    params = dict(params or {})
    if name == "gb":
        return GreyBoxForecaster(**params)
    if name not in _CLASSES:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(ALL_MODELS)}")
    if seed is not None and name in ("qrf", "nn"):
        params.setdefault("rng_seed", seed)
    extra = {}
    for key in ("warm_start",):
        if key in params:
            extra[key] = params.pop(key)
    return _CLASSES[name](_CONFIGS[name](**params), use_temperature=use_temperature, **extra)


__all__ = [
    "ALL_MODELS", "BASE_MODELS", "ConvergenceError", "EnsembleError", "EnsembleWeights",
    "Forecaster", "GBModel", "GreyBoxForecaster", "InsufficientDataError", "KnnConfig",
    "KnnForecaster", "MinMaxScaler", "ModelError", "NnConfig", "NnForecaster", "QrfConfig",
    "QrfForecaster", "RankDeficientError", "SvrConfig", "SvrForecaster", "clamp_forecast",
    "ens_fit", "ens_predict", "gb_fit", "gb_predict", "knn_predict", "load_model",
    "make_forecaster", "save_model",
]
