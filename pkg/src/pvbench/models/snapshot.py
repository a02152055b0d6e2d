"""Versioned pickle snapshots of fitted models."""
from __future__ import annotations

import os
import pickle
import tempfile
from pathlib import Path

from .. import __version__

MAGIC = b"PVBENCH-MODEL\n"
FORMAT_VERSION = 1


class SnapshotError(RuntimeError):
    pass


def save_model(model, path) -> Path:
    path = Path(path)
    payload = pickle.dumps({"format": FORMAT_VERSION, "package": __version__, "model": model},
                           protocol=pickle.HIGHEST_PROTOCOL)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "wb") as fh:
        fh.write(MAGIC)
        fh.write(payload)
    os.replace(tmp, path)
    return path


def load_model(path):
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise SnapshotError(f"{path} is not a model snapshot")
        blob = pickle.load(fh)
    if blob.get("format") != FORMAT_VERSION:
        raise SnapshotError(
            f"snapshot format {blob.get('format')} is not supported (expected {FORMAT_VERSION})")
    return blob["model"]
