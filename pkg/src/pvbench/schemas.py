"""JSON Schemas (draft 2020-12) of the documents the command line writes."""
from __future__ import annotations

_NUM = {"type": "number"}
_NUM_OR_NULL = {"type": ["number", "null"]}

METRIC = {
    "type": ["object", "null"],
    "required": ["nmae", "nrmse", "mae", "nmbe", "n_hours", "scope"],
    "properties": {"nmae": _NUM, "nrmse": _NUM, "mae": _NUM, "nmbe": _NUM,
                   "n_hours": {"type": "integer", "minimum": 1}, "scope": {"type": "string"}},
    "additionalProperties": False,
}

_MODEL_MAP = {"type": "object", "additionalProperties": METRIC}

METRICS_DOCUMENT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pvbench backtest metrics",
    "type": "object",
    "required": ["schema_version", "models", "plants", "folds", "overall_hour_weighted",
                 "overall_plant_weighted", "by_month", "by_plant", "by_csi", "weekly_nmae",
                 "ensemble_weights", "failures", "dropped_hours", "missing_hours"],
    "properties": {
        "schema_version": {"const": 1},
        "models": {"type": "array", "items": {"enum": ["gb", "nn", "knn", "qrf", "svr", "ens"]},
                   "minItems": 1, "uniqueItems": True},
        "plants": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "folds": {"type": "array", "items": {
            "type": "object", "required": ["index", "train_start", "test_start", "test_end"],
            "properties": {"index": {"type": "integer", "minimum": 0},
                           "train_start": {"type": "string"}, "test_start": {"type": "string"},
                           "test_end": {"type": "string"}}}},
        "overall_hour_weighted": _MODEL_MAP,
        "overall_plant_weighted": {"type": "object", "additionalProperties": {
            "type": "object", "properties": {k: _NUM_OR_NULL for k in ("nmae", "nrmse", "mae", "nmbe")}}},
        "by_month": {"type": "object", "propertyNames": {"pattern": "^([1-9]|1[0-2])$"},
                     "additionalProperties": _MODEL_MAP},
        "by_plant": {"type": "object", "additionalProperties": _MODEL_MAP},
        "by_csi": {"type": "object", "required": ["edges", "rows"], "properties": {
            "edges": {"type": "array", "items": {"type": "string"}, "minItems": 10, "maxItems": 10},
            "rows": {"type": "array", "items": {
                "type": "object", "required": ["bucket", "model", "n_hours", "metrics"],
                "properties": {"bucket": {"type": "string"}, "model": {"type": "string"},
                               "n_hours": {"type": "integer", "minimum": 0}, "metrics": METRIC}}}}},
        "weekly_nmae": {"type": "object", "additionalProperties": {
            "type": "array", "items": _NUM_OR_NULL}},
        "ensemble_weights": {"type": "array", "items": {
            "type": "object",
            "required": ["plant", "fold", "members", "raw", "normalized", "validation_hours",
                         "sse_raw", "sse_members"],
            "properties": {"members": {"type": "array", "items": {"type": "string"}},
                           "raw": {"type": "array", "items": _NUM},
                           "normalized": {"type": "array", "items": _NUM},
                           "validation_hours": {"type": "integer", "minimum": 1}}}},
        "failures": {"type": "array", "items": {
            "type": "object", "required": ["plant", "fold", "model", "message"]}},
        "dropped_hours": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "missing_hours": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
    },
}

MANIFEST = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pvbench output manifest",
    "type": "object",
    "required": ["tool", "version", "kernel_backend", "command", "seed", "config_sha256", "config",
                 "inputs", "outputs"],
    "properties": {
        "tool": {"const": "pvbench"},
        "version": {"type": "string"},
        "kernel_backend": {"enum": ["cython", "python"]},
        "command": {"enum": ["synth", "backtest", "report"]},
        "seed": {"type": ["integer", "null"]},
        "config_sha256": {"type": ["string", "null"], "pattern": "^[0-9a-f]{64}$"},
        "config": {"type": ["object", "null"]},
        "inputs": {"type": "array", "items": {"type": "object"}},
        "outputs": {"type": "array", "items": {
            "type": "object", "required": ["path", "bytes", "sha256"],
            "properties": {"path": {"type": "string"}, "bytes": {"type": "integer", "minimum": 0},
                           "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"}},
            "additionalProperties": False}},
    },
}

COMPARISON = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pvbench model comparison",
    "type": "object",
    "required": ["model_a", "model_b", "paired_hours", "nmae_a", "nmae_b", "nmae_delta", "test",
                 "statistic", "p_value", "n_effective", "zeros_dropped"],
    "properties": {
        "model_a": {"type": "string"}, "model_b": {"type": "string"},
        "paired_hours": {"type": "integer", "minimum": 1},
        "nmae_a": _NUM, "nmae_b": _NUM, "nmae_delta": _NUM,
        "test": {"enum": ["exact", "normal-approximation"]},
        "statistic": _NUM,
        "p_value": {"type": "number", "minimum": 0, "maximum": 1},
        "n_effective": {"type": "integer", "minimum": 1},
        "zeros_dropped": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
}

DENSITY_SUMMARY = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pvbench daily nMBE densities",
    "type": "object",
    "required": ["min_days", "models"],
    "properties": {
        "min_days": {"type": "integer"},
        "models": {"type": "object", "additionalProperties": {"oneOf": [
            {"type": "object", "required": ["skipped"], "additionalProperties": False,
             "properties": {"skipped": {"type": "string"}}},
            {"type": "object", "required": ["n_days", "variance", "bandwidth"],
             "additionalProperties": False,
             "properties": {"n_days": {"type": "integer"}, "variance": _NUM, "bandwidth": _NUM}},
        ]}},
    },
}

SCHEMAS = {"metrics.json": METRICS_DOCUMENT, "manifest.json": MANIFEST,
           "density.json": DENSITY_SUMMARY, "comparison": COMPARISON}
