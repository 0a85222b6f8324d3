"""Hot numeric kernels: numba-jitted with pure-numpy fallbacks.

Two loops dominate pipeline runtime: trilinear resampling of 3-D volumes
and pairwise squared distances for neighbor search. Both ship in a jitted
and a vectorized-numpy variant. The jitted path is used when numba imports
cleanly and ``MODFUSE_DISABLE_NUMBA`` is unset (or "0"/"false"); otherwise
the numpy path runs. ``benchmarks/bench_kernels.py`` compares the two.

Both variants evaluate the same expressions in the same term order, so
results agree to the last few ulps; tests pin them against each other and
against slow reference oracles.
"""

import os

import numpy as np

_env = os.environ.get("MODFUSE_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _env not in ("", "0", "false", "no")

if not _DISABLED:
    try:
        from numba import njit
    except ImportError:
        njit = None
else:
    njit = None

HAVE_NUMBA = njit is not None


def using_numba() -> bool:
    """True when the jitted kernel path is active."""
    return HAVE_NUMBA


# ---------------------------------------------------------------------------
# trilinear resampling (corner-aligned)
# ---------------------------------------------------------------------------

def _axis_grid(n_src: int, n_dst: int):
    """Lower index, upper index and fractional weight along one axis.

    Corner-aligned: output j samples source coordinate j*(n_src-1)/(n_dst-1).
    A target axis of length 1 samples coordinate 0 (the scale is undefined).
    """
    if n_dst > 1 and n_src > 1:
        coords = np.arange(n_dst, dtype=np.float64) * ((n_src - 1) / (n_dst - 1))
    else:
        coords = np.zeros(n_dst, dtype=np.float64)
    lo = np.minimum(np.floor(coords).astype(np.int64), max(n_src - 2, 0))
    frac = coords - lo
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, frac


def trilinear_resample_numpy(vol: np.ndarray, out_shape) -> np.ndarray:
    """Vectorized trilinear resampling (gathers the 8 corner lattices)."""
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    z0, z1, fz = _axis_grid(vol.shape[0], out_shape[0])
    y0, y1, fy = _axis_grid(vol.shape[1], out_shape[1])
    x0, x1, fx = _axis_grid(vol.shape[2], out_shape[2])
    wz = fz[:, None, None]
    wy = fy[None, :, None]
    wx = fx[None, None, :]
    g = lambda zi, yi, xi: vol[np.ix_(zi, yi, xi)]
    return (
        g(z0, y0, x0) * (1.0 - wz) * (1.0 - wy) * (1.0 - wx)
        + g(z0, y0, x1) * (1.0 - wz) * (1.0 - wy) * wx
        + g(z0, y1, x0) * (1.0 - wz) * wy * (1.0 - wx)
        + g(z0, y1, x1) * (1.0 - wz) * wy * wx
        + g(z1, y0, x0) * wz * (1.0 - wy) * (1.0 - wx)
        + g(z1, y0, x1) * wz * (1.0 - wy) * wx
        + g(z1, y1, x0) * wz * wy * (1.0 - wx)
        + g(z1, y1, x1) * wz * wy * wx
    )


if HAVE_NUMBA:

    @njit(cache=True)
    def _trilinear_jit(vol, z0, z1, fz, y0, y1, fy, x0, x1, fx, out):  # pragma: no cover - exercised via wrapper
        for a in range(out.shape[0]):
            za, zb, wz = z0[a], z1[a], fz[a]
            for b in range(out.shape[1]):
                ya, yb, wy = y0[b], y1[b], fy[b]
                for c in range(out.shape[2]):
                    xa, xb, wx = x0[c], x1[c], fx[c]
                    out[a, b, c] = (
                        vol[za, ya, xa] * (1.0 - wz) * (1.0 - wy) * (1.0 - wx)
                        + vol[za, ya, xb] * (1.0 - wz) * (1.0 - wy) * wx
                        + vol[za, yb, xa] * (1.0 - wz) * wy * (1.0 - wx)
                        + vol[za, yb, xb] * (1.0 - wz) * wy * wx
                        + vol[zb, ya, xa] * wz * (1.0 - wy) * (1.0 - wx)
                        + vol[zb, ya, xb] * wz * (1.0 - wy) * wx
                        + vol[zb, yb, xa] * wz * wy * (1.0 - wx)
                        + vol[zb, yb, xb] * wz * wy * wx
                    )

    def trilinear_resample_numba(vol: np.ndarray, out_shape) -> np.ndarray:
        """Jitted trilinear resampling; same math as the numpy path."""
        vol = np.ascontiguousarray(vol, dtype=np.float64)
        z0, z1, fz = _axis_grid(vol.shape[0], out_shape[0])
        y0, y1, fy = _axis_grid(vol.shape[1], out_shape[1])
        x0, x1, fx = _axis_grid(vol.shape[2], out_shape[2])
        out = np.empty(tuple(out_shape), dtype=np.float64)
        _trilinear_jit(vol, z0, z1, fz, y0, y1, fy, x0, x1, fx, out)
        return out

else:
    trilinear_resample_numba = None


def trilinear_resample(vol: np.ndarray, out_shape) -> np.ndarray:
    if HAVE_NUMBA:
        return trilinear_resample_numba(vol, out_shape)
    return trilinear_resample_numpy(vol, out_shape)


# ---------------------------------------------------------------------------
# pairwise squared euclidean distances
# ---------------------------------------------------------------------------

def pairwise_sq_dists_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances between rows of a and rows of b, shape (na, nb).

    Uses explicit differences (not the a2+b2-2ab trick) so values are
    exact to rounding and never spuriously negative.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


if HAVE_NUMBA:

    @njit(cache=True)
    def _pairwise_jit(a, b, out):  # pragma: no cover - exercised via wrapper
        for i in range(a.shape[0]):
            for j in range(b.shape[0]):
                acc = 0.0
                for k in range(a.shape[1]):
                    d = a[i, k] - b[j, k]
                    acc += d * d
                out[i, j] = acc

    def pairwise_sq_dists_numba(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.ascontiguousarray(a, dtype=np.float64)
        b = np.ascontiguousarray(b, dtype=np.float64)
        out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
        _pairwise_jit(a, b, out)
        return out

else:
    pairwise_sq_dists_numba = None


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if HAVE_NUMBA:
        return pairwise_sq_dists_numba(a, b)
    return pairwise_sq_dists_numpy(a, b)
