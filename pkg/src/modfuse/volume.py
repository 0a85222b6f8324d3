"""3-D scan preprocessing: intensity clip/normalize and spatial resampling.

Volumes are stored (depth, height, width). Resampling is trilinear with
corner-aligned sampling: output index j along an axis of target length M
reads source coordinate j*(N-1)/(M-1); a target axis of length 1 reads
coordinate 0. External feature extractors must match this convention,
which is also recorded in the sidecar format notes below.

On disk a volume is a raw little-endian float32 array (C order) with a
JSON sidecar (same path + ".json") carrying shape, units, dtype and byte
order. In memory voxels are float64.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import accel
from .errors import ValidationError
from .io import atomic_write_bytes, atomic_write_text

# Default CT window and pretrained-backbone intensity statistics.
CLIP_LO = -1024.0
CLIP_HI = 1024.0
INTENSITY_MEAN = -158.58
INTENSITY_STD = 324.70

# (depth, height, width) expected by the downstream volume encoder.
TARGET_SHAPE = (56, 448, 448)


@dataclass(frozen=True)
class Volume:
    voxels: np.ndarray  # float64, shape (depth, height, width)
    units: str = "HU"

    def __post_init__(self):
        v = self.voxels
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValidationError(f"volume must be 3-D with positive dims, got {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("volume has non-finite voxels")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape


def make_volume(voxels, units: str = "HU") -> Volume:
    return Volume(np.asarray(voxels, dtype=np.float64), units=units)


def clip_normalize(
    vol: Volume,
    lo: float = CLIP_LO,
    hi: float = CLIP_HI,
    mu: float = INTENSITY_MEAN,
    sigma: float = INTENSITY_STD,
) -> Volume:
    """Clamp voxels to [lo, hi] then apply (x - mu) / sigma elementwise."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    if not lo < hi:
        raise ValidationError(f"need lo < hi, got [{lo}, {hi}]")
    out = (np.clip(vol.voxels, lo, hi) - mu) / sigma
    return Volume(out, units="normalized")


def resample_trilinear(vol: Volume, target_shape) -> Volume:
    """Resize to target_shape with corner-aligned trilinear interpolation.

    An identity resize returns a voxel-identical copy; constant volumes
    stay constant; outputs never overshoot the input value range.
    """
    target = tuple(int(d) for d in target_shape)
    if len(target) != 3 or min(target) < 1:
        raise ValidationError(f"target shape must be 3 positive dims, got {target_shape}")
    if target == vol.shape:
        return Volume(vol.voxels.copy(), units=vol.units)
    out = accel.trilinear_resample(vol.voxels, target)
    return Volume(out, units=vol.units)


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_volume(vol: Volume, path) -> None:
    """Write raw little-endian float32 voxels plus the JSON sidecar."""
    path = Path(path)
    raw = np.ascontiguousarray(vol.voxels, dtype="<f4")
    atomic_write_bytes(path, raw.tobytes())
    sidecar = {
        "shape": list(vol.shape),
        "units": vol.units,
        "dtype": "float32",
        "byte_order": "little",
        "axis_order": "depth,height,width",
        "resample_convention": "corner-aligned",
    }
    atomic_write_text(_sidecar_path(path), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_volume(path) -> Volume:
    path = Path(path)
    with open(_sidecar_path(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    shape = tuple(int(d) for d in sidecar["shape"])
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise ValidationError(
            f"{path}: raw size {raw.size} does not match sidecar shape {shape}"
        )
    return Volume(raw.reshape(shape).astype(np.float64), units=sidecar.get("units", "HU"))
