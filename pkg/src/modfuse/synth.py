"""Synthetic multimodal cohorts for desk-scale verification.

Each modality hides its own latent score inside a small informative
subspace (distinct per modality, pure noise elsewhere). The binary label
thresholds ``complementarity * (sum of latents) + (1 - complementarity) *
independent noise`` at the empirical quantile matching the requested
positive rate, so:

* complementarity 0 makes every modality label-independent noise;
* complementarity 1 makes the label fully determined by the combined
  latents, while any single modality sees only its own share - the
  fusion-beats-unimodal regime.

Generation is deterministic per (spec, seed); written files are
byte-identical across reruns.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fusion import MODALITIES, ModalityBundle
from .io import FeatureTable, default_feature_names


@dataclass(frozen=True)
class SyntheticSpec:
    n_patients: int = 600
    dims: tuple[int, int, int] = (64, 512, 1024)  # clinical, radiology, histology
    signal: tuple[float, float, float] = (3.0, 3.0, 3.0)
    complementarity: float = 1.0
    missing_rates: tuple[float, float, float] = (0.0, 0.0, 0.0)
    positive_rate: float = 0.77
    informative_dims: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 4:
            raise ValidationError("need at least 4 patients")
        if any(d < 1 for d in self.dims):
            raise ValidationError(f"dims must be positive, got {self.dims}")
        if not 0.0 <= self.complementarity <= 1.0:
            raise ValidationError("complementarity must lie in [0, 1]")
        if any(not 0.0 <= r <= 1.0 for r in self.missing_rates):
            raise ValidationError("missing rates must lie in [0, 1]")
        if not 0.0 < self.positive_rate < 1.0:
            raise ValidationError("positive_rate must lie in (0, 1)")
        if self.informative_dims < 1 or self.informative_dims > min(self.dims):
            raise ValidationError(
                f"informative_dims must lie in [1, {min(self.dims)}]"
            )

    def as_dict(self) -> dict:
        return {
            "n_patients": self.n_patients,
            "dims": list(self.dims),
            "signal": list(self.signal),
            "complementarity": self.complementarity,
            "missing_rates": list(self.missing_rates),
            "positive_rate": self.positive_rate,
            "informative_dims": self.informative_dims,
            "seed": self.seed,
        }


@dataclass
class SyntheticCohort:
    bundle: ModalityBundle
    labels: dict[str, int]
    latents: np.ndarray = field(repr=False, default=None)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCohort:
    """Draw one cohort: a ModalityBundle plus binary labels."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_patients
    ids = tuple(f"P{i:05d}" for i in range(n))

    latents = rng.standard_normal((n, len(MODALITIES)))
    own_noise = rng.standard_normal(n)
    c = spec.complementarity
    combined = c * latents.sum(axis=1) + (1.0 - c) * own_noise
    # empirical quantile keeps the prevalence within one count of target
    k = int(round((1.0 - spec.positive_rate) * n))
    k = min(max(k, 1), n - 1)
    tau = np.sort(combined)[k - 1]
    y = (combined > tau).astype(np.int64)

    missing = np.zeros((n, len(MODALITIES)), dtype=bool)
    for j, rate in enumerate(spec.missing_rates):
        if rate > 0:
            missing[:, j] = rng.random(n) < rate
    # every patient keeps at least one modality
    all_gone = missing.all(axis=1)
    if all_gone.any():
        keep = rng.integers(0, len(MODALITIES), size=int(all_gone.sum()))
        for row, j in zip(np.nonzero(all_gone)[0], keep):
            missing[row, j] = False

    tables: dict[str, FeatureTable | None] = {}
    kdims = spec.informative_dims
    for j, m in enumerate(MODALITIES):
        width = spec.dims[j]
        X = rng.standard_normal((n, width))
        direction = rng.standard_normal(kdims)
        direction /= np.linalg.norm(direction)
        X[:, :kdims] += spec.signal[j] * latents[:, j : j + 1] * direction
        present = ~missing[:, j]
        if not present.any():
            tables[m] = None
            continue
        tables[m] = FeatureTable(
            tuple(pid for pid, keep in zip(ids, present) if keep),
            default_feature_names(width),
            X[present],
        )

    labels = {pid: int(v) for pid, v in zip(ids, y)}
    return SyntheticCohort(
        bundle=ModalityBundle(tables=tables), labels=labels, latents=latents
    )
