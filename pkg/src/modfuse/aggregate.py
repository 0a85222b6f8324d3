"""Collapse instance-level embeddings and predictions to the patient level.

Scan/slide embeddings become one vector per patient (mean pooling, or
two-stage slide-then-patient averaging for histology); instance-level
probabilities become one patient score (maximum).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .io import FeatureTable


@dataclass(frozen=True)
class EmbeddingBag:
    """Equal-width instance vectors belonging to one patient."""

    patient_id: str
    instances: np.ndarray  # shape (n_instances, width)
    kind: str = "scan"  # scan | slide | patch-aggregate

    def __post_init__(self):
        arr = self.instances
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValidationError(
                f"bag for {self.patient_id!r} needs at least one instance row"
            )
        if not np.isfinite(arr).all():
            raise ValidationError(f"bag for {self.patient_id!r} has non-finite entries")


def _stack(instances) -> np.ndarray:
    rows = [np.asarray(v, dtype=np.float64) for v in instances]
    if not rows:
        raise ValidationError("cannot pool an empty instance list")
    width = rows[0].shape[-1]
    for i, r in enumerate(rows):
        if r.shape[-1] != width:
            raise ValidationError(
                f"instance width mismatch: instance {i} has {r.shape[-1]}, expected {width}"
            )
    return np.vstack([r.reshape(-1, width) for r in rows])


def mean_pool(instances) -> np.ndarray:
    """Elementwise arithmetic mean of equal-width instance vectors."""
    return _stack(instances).mean(axis=0)


def two_stage_mean(slide_bags: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of per-slide means (slides contribute equally, not patches).

    Differs from the pooled mean whenever slides have unequal patch
    counts; equals it when counts match.
    """
    if len(slide_bags) == 0:
        raise ValidationError("cannot pool an empty slide list")
    slide_means = [mean_pool(bag) for bag in slide_bags]
    return mean_pool(slide_means)


def select_max_weight(instances, weights) -> np.ndarray:
    """The instance vector carrying the largest weight (ties: lowest index)."""
    mat = _stack(instances)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (mat.shape[0],):
        raise ValidationError(
            f"need one weight per instance ({mat.shape[0]}), got shape {w.shape}"
        )
    return mat[int(np.argmax(w))].copy()


def max_prob_inference(instance_probs) -> float:
    """Patient-level score = max over instance probabilities."""
    probs = np.asarray(instance_probs, dtype=np.float64).ravel()
    if probs.size == 0:
        raise ValidationError("cannot infer from an empty probability list")
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise ValidationError("instance probabilities must lie in [0, 1]")
    return float(probs.max())


def pool_by_patient(
    ids: Sequence[str],
    matrix: np.ndarray,
    mode: str = "mean",
    weights=None,
    names=None,
) -> FeatureTable:
    """Group instance rows by patient id and pool each group.

    ``mode`` is "mean" (elementwise average) or "max-weight" (keep the
    highest-weight instance; requires ``weights``). Patient order follows
    first appearance.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
        raise ValidationError("ids and matrix rows must align")
    groups: dict[str, list[int]] = {}
    for i, pid in enumerate(ids):
        groups.setdefault(pid, []).append(i)
    if mode == "max-weight":
        if weights is None:
            raise ValidationError("max-weight pooling requires instance weights")
        w = np.asarray(weights, dtype=np.float64)
        pooled = [select_max_weight(matrix[rows], w[rows]) for rows in groups.values()]
    elif mode == "mean":
        pooled = [mean_pool(matrix[rows]) for rows in groups.values()]
    else:
        raise ValidationError(f"unknown pooling mode {mode!r}")
    if names is None:
        names = tuple(f"f{i}" for i in range(matrix.shape[1]))
    return FeatureTable(tuple(groups.keys()), tuple(names), np.vstack(pooled))


def pool_two_stage_by_patient(
    patient_ids: Sequence[str],
    slide_ids: Sequence[str],
    matrix: np.ndarray,
    names=None,
) -> FeatureTable:
    """Patch rows -> per-slide means -> per-patient mean of slide means."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not (len(patient_ids) == len(slide_ids) == matrix.shape[0]):
        raise ValidationError("patient ids, slide ids and matrix rows must align")
    per_patient: dict[str, dict[str, list[int]]] = {}
    for i, (pid, sid) in enumerate(zip(patient_ids, slide_ids)):
        per_patient.setdefault(pid, {}).setdefault(sid, []).append(i)
    pooled = [
        two_stage_mean([matrix[rows] for rows in slides.values()])
        for slides in per_patient.values()
    ]
    if names is None:
        names = tuple(f"f{i}" for i in range(matrix.shape[1]))
    return FeatureTable(tuple(per_patient.keys()), tuple(names), np.vstack(pooled))
