"""Minority oversampling (SMOTE, ADASYN) and balanced sample weighting.

Both samplers append synthetic minority rows after the untouched
originals; each synthetic row is x_i + u * (x_nn - x_i) with u ~ U[0, 1]
and x_nn one of the k nearest minority neighbors of the seed row x_i
(Euclidean, ties broken by lowest row index). SMOTE spreads the deficit
uniformly across minority rows; ADASYN allocates it proportionally to
each row's majority-neighbor density r_i among its k nearest neighbors
in the full dataset (nearest-integer rounding of the normalized shares,
falling back to the uniform SMOTE allocation when every r_i is zero).

Apply to training folds only. Identical (X, y, plan) always produce
identical output bytes.
"""

from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import ResampleError


@dataclass(frozen=True)
class ResamplePlan:
    method: str = "smote"  # smote | adasyn | none
    k_neighbors: int = 5
    target_ratio: float = 1.0  # 1.0 = full balance
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("smote", "adasyn", "none"):
            raise ResampleError(f"unknown resampling method {self.method!r}")
        if self.k_neighbors < 1:
            raise ResampleError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ResampleError(
                f"target_ratio must lie in (0, 1], got {self.target_ratio}"
            )


def _classes(y: np.ndarray):
    """(minority_label, majority_label, minority_idx, majority_idx)."""
    labels, counts = np.unique(y, return_counts=True)
    if labels.size < 2:
        raise ResampleError("oversampling needs both classes present")
    if labels.size > 2:
        raise ResampleError(f"expected binary labels, found {labels.size} classes")
    mi = int(np.argmin(counts))  # tie -> lower label is "minority"
    minority, majority = labels[mi], labels[1 - mi]
    return (
        minority,
        majority,
        np.nonzero(y == minority)[0],
        np.nonzero(y == majority)[0],
    )


def _validate(X, y, plan: ResamplePlan):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ResampleError(f"X {X.shape} and y {y.shape} do not align")
    minority, majority, min_idx, maj_idx = _classes(y)
    if plan.k_neighbors >= min_idx.size:
        raise ResampleError(
            f"k_neighbors={plan.k_neighbors} must be smaller than the minority "
            f"class size ({min_idx.size})"
        )
    return X, y, minority, majority, min_idx, maj_idx


def _deficit(plan: ResamplePlan, n_min: int, n_maj: int) -> int:
    target = int(np.ceil(plan.target_ratio * n_maj))
    return max(target - n_min, 0)


def _knn_indices(dists: np.ndarray, k: int) -> np.ndarray:
    """k smallest per row, self excluded, distance ties by lowest index."""
    n = dists.shape[0]
    cols = np.arange(n)
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        order = np.lexsort((cols, dists[i]))
        out[i] = order[order != i][:k]
    return out


def smote_allocation(n_minority: int, deficit: int) -> np.ndarray:
    """Uniform round-robin allocation of the deficit over minority rows."""
    base, extra = divmod(deficit, n_minority)
    alloc = np.full(n_minority, base, dtype=np.int64)
    alloc[:extra] += 1
    return alloc


def adasyn_allocation(X, y, plan: ResamplePlan) -> np.ndarray:
    """Per-minority-row synthesis counts from majority-neighbor density.

    r_i = (majority neighbors among the k nearest in the full dataset) / k,
    normalized to sum 1, times the deficit, rounded to nearest integer.
    All-zero densities fall back to the uniform SMOTE allocation.
    """
    X, y, _, _, min_idx, maj_idx = _validate(X, y, plan)
    deficit = _deficit(plan, min_idx.size, maj_idx.size)
    if deficit == 0:
        return np.zeros(min_idx.size, dtype=np.int64)
    dists = accel.pairwise_sq_dists(X[min_idx], X)
    k = plan.k_neighbors
    n = X.shape[0]
    r = np.empty(min_idx.size, dtype=np.float64)
    is_majority = np.isin(np.arange(n), maj_idx)
    for row, self_idx in enumerate(min_idx):
        order = np.lexsort((np.arange(n), dists[row]))
        neigh = order[order != self_idx][:k]
        r[row] = is_majority[neigh].sum() / k
    total = r.sum()
    if total == 0.0:
        return smote_allocation(min_idx.size, deficit)
    return np.rint(r / total * deficit).astype(np.int64)


def _synthesize(X, y, min_idx, minority, alloc, neighbors, rng):
    rows = []
    for slot, seed_idx in enumerate(min_idx):
        for _ in range(int(alloc[slot])):
            nn_local = neighbors[slot][rng.integers(neighbors.shape[1])]
            u = rng.random()
            xi = X[seed_idx]
            xnn = X[min_idx[nn_local]]
            rows.append(xi + u * (xnn - xi))
    if not rows:
        return X.copy(), y.copy()
    X2 = np.vstack([X, np.asarray(rows)])
    y2 = np.concatenate([y, np.full(len(rows), minority, dtype=y.dtype)])
    return X2, y2


def smote(X, y, plan: ResamplePlan):
    """SMOTE oversampling; returns (X', y') with originals retained first."""
    X, y, minority, _, min_idx, maj_idx = _validate(X, y, plan)
    deficit = _deficit(plan, min_idx.size, maj_idx.size)
    if deficit == 0:
        return X.copy(), y.copy()
    alloc = smote_allocation(min_idx.size, deficit)
    neighbors = _knn_indices(accel.pairwise_sq_dists(X[min_idx], X[min_idx]), plan.k_neighbors)
    rng = np.random.default_rng(plan.seed)
    return _synthesize(X, y, min_idx, minority, alloc, neighbors, rng)


def adasyn(X, y, plan: ResamplePlan):
    """ADASYN oversampling; density-weighted allocation, SMOTE mechanics."""
    X, y, minority, _, min_idx, maj_idx = _validate(X, y, plan)
    alloc = adasyn_allocation(X, y, plan)
    if alloc.sum() == 0:
        return X.copy(), y.copy()
    neighbors = _knn_indices(accel.pairwise_sq_dists(X[min_idx], X[min_idx]), plan.k_neighbors)
    rng = np.random.default_rng(plan.seed)
    return _synthesize(X, y, min_idx, minority, alloc, neighbors, rng)


def apply_plan(X, y, plan: ResamplePlan):
    if plan.method == "none":
        return np.asarray(X, dtype=np.float64).copy(), np.asarray(y).copy()
    if plan.method == "smote":
        return smote(X, y, plan)
    return adasyn(X, y, plan)


def class_balance_weights(y) -> np.ndarray:
    """Inverse-class-frequency weight per sample (for balanced batching).

    Sampling with replacement under these weights draws each class with
    equal probability in expectation.
    """
    y = np.asarray(y)
    if y.size == 0:
        raise ResampleError("cannot weight an empty label vector")
    labels, counts = np.unique(y, return_counts=True)
    lookup = {lab: 1.0 / cnt for lab, cnt in zip(labels, counts)}
    return np.asarray([lookup[v] for v in y], dtype=np.float64)
