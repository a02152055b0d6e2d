"""Linear combination of member forecasts fitted on a validation window."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ModelError


class EnsembleError(ModelError):
    pass


@dataclass(frozen=True)
class EnsembleWeights:
    members: tuple[str, ...]
    raw: np.ndarray          # least-squares solution H^+ y
    normalized: np.ndarray   # raw / sum(raw), used for prediction

    def as_dict(self) -> dict:
        return {"members": list(self.members), "raw": self.raw.tolist(),
                "normalized": self.normalized.tolist()}


def ens_fit(H, y, members) -> EnsembleWeights:
    """Weights minimising ||H w - y|| via the pseudo-inverse, then normalised to sum 1.

    ``H`` holds one column of validation forecasts per member. Identical
    columns are solved as one and share its weight equally, which is the
    minimum-norm solution and keeps their weights exactly equal.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    members = tuple(members)
    if H.ndim != 2 or H.shape[1] != len(members):
        raise EnsembleError("validation matrix needs one column per member")
    if not members:
        raise EnsembleError("an ensemble needs at least one member")
    if H.shape[0] < len(members) + 1:
        raise EnsembleError(f"validation window holds {H.shape[0]} hours, "
                            f"need at least {len(members) + 1}")
    if not (np.isfinite(H).all() and np.isfinite(y).all()):
        raise EnsembleError("validation data contains non-finite values")
    if not np.any(H):
        raise EnsembleError("all member predictions are zero on the validation window")
    _, first, group = np.unique(H.T, axis=0, return_index=True, return_inverse=True)
    group = group.ravel()
    w_unique = np.linalg.pinv(H[:, first]) @ y
    raw = w_unique[group] / np.bincount(group)[group]
    total = raw.sum()
    if abs(total) < 1e-12:
        raise EnsembleError("ensemble weights sum to zero and cannot be normalised")
    return EnsembleWeights(members, raw, raw / total)


def ens_predict(weights: EnsembleWeights, outputs) -> np.ndarray:
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape[-1] != len(weights.members):
        raise EnsembleError("member output count does not match the ensemble")
    return outputs @ weights.normalized
