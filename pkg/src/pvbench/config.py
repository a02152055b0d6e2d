"""Run configuration: one YAML document per run, flags override its fields."""
from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timedelta, timezone
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .models import ALL_MODELS, BASE_MODELS
from .synth import SynthConfig

SCHEMA_VERSION = 1
CONFIG_ENV = "PVBENCH_CONFIG"


class ConfigError(ValueError):
    """Invalid or unreadable configuration; ``details`` lists the offending fields."""

    def __init__(self, message: str, details: list | None = None):
        super().__init__(message)
        self.details = details or []


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DataSection(_Strict):
    dir: str = Field(min_length=1)


class Schedule(_Strict):
    initial_train_end: datetime
    step_weeks: int = Field(default=1, ge=1)
    validation_weeks: int = Field(default=8, ge=1)

    @field_validator("initial_train_end")
    @classmethod
    def _utc(cls, v: datetime):
        if v.tzinfo is None:
            v = v.replace(tzinfo=timezone.utc)
        return v.astimezone(timezone.utc)

    @property
    def step(self) -> timedelta:
        return timedelta(weeks=self.step_weeks)


class RunConfig(_Strict):
    schema_version: int
    seed: int = 0
    out: str = "run"
    data: DataSection | None = None
    synth: SynthConfig | None = None
    models: list[str] = list(ALL_MODELS)
    params: dict[str, dict] = {}
    use_temperature: bool = False
    schedule: Schedule

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v: int):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}; this tool reads {SCHEMA_VERSION}")
        return v

    @field_validator("models")
    @classmethod
    def _models(cls, v: list[str]):
        unknown = [m for m in v if m not in ALL_MODELS]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose from {list(ALL_MODELS)}")
        if not v:
            raise ValueError("select at least one model")
        if len(set(v)) != len(v):
            raise ValueError("duplicate model names")
        return v

    @model_validator(mode="after")
    def _invariants(self):
        if (self.data is None) == (self.synth is None):
            raise ValueError("give exactly one of 'data' (dataset directory) or 'synth'")
        if "ens" in self.models and sum(m in BASE_MODELS for m in self.models) < 2:
            raise ValueError("'ens' needs at least two member models")
        bad = sorted(set(self.params) - set(BASE_MODELS))
        if bad:
            raise ValueError(f"hyperparameter overrides for unknown models {bad}")
        return self

    @property
    def members(self) -> tuple[str, ...]:
        return tuple(m for m in self.models if m != "ens")

    def canonical(self) -> dict:
        """JSON-ready document without the output location (which must not affect results)."""
        doc = self.model_dump(mode="json", exclude={"out"})
        return doc

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _errors(exc: ValidationError) -> list[dict]:
    return [{"field": ".".join(str(p) for p in e["loc"]) or "<root>", "message": e["msg"]}
            for e in exc.errors()]


def build_config(doc: dict, overrides: dict | None = None) -> RunConfig:
    """Validate a config document after applying flag overrides (``None`` values are ignored).

    ``seed`` overrides both the run seed and the synthetic generator seed.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    doc = json.loads(json.dumps(doc, default=str))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        doc[key] = value
        if key == "seed" and isinstance(doc.get("synth"), dict):
            doc["synth"]["rng_seed"] = value
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError("invalid configuration", _errors(exc)) from None


def resolve_path(path: str | None) -> Path:
    """Explicit path, else the path named by PVBENCH_CONFIG."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        raise ConfigError(f"no configuration given; pass --config or set {CONFIG_ENV}")
    return Path(path)


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> RunConfig:
    p = resolve_path(None if path is None else str(path))
    try:
        doc = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {p}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration {p} is not valid YAML: {exc}") from None
    cfg = build_config(doc, overrides)
    if cfg.data is not None and not Path(cfg.data.dir).is_absolute():
        # dataset paths are relative to the config file
        cfg = cfg.model_copy(update={"data": DataSection(dir=str(p.parent / cfg.data.dir))})
    return cfg
