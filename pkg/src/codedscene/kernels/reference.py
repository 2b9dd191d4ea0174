"""Pure numpy sampling kernels; semantics identical to the compiled module.

Both backends compute the same expressions in the same order so that results
agree to the last bit. A sample is valid only when its bilinear footprint lies
fully inside the grid (floor(u) in [0, W-2], floor(v) in [0, H-2]); invalid
samples return zeros.
"""

from __future__ import annotations

import numpy as np


def _footprint(shape, u, v):
    h, w = shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        iu = np.floor(u)
        iv = np.floor(v)
        valid = (
            np.isfinite(u)
            & np.isfinite(v)
            & (iu >= 0)
            & (iu <= w - 2)
            & (iv >= 0)
            & (iv <= h - 2)
        )
    iu = np.where(valid, iu, 0).astype(np.intp)
    iv = np.where(valid, iv, 0).astype(np.intp)
    a = np.where(valid, u - iu, 0.0)
    b = np.where(valid, v - iv, 0.0)
    return iu, iv, a, b, valid


def bilinear_map(grid, u, v):
    """Bilinearly sample a 2-D map.

    Returns (value, d/du, d/dv, valid), each shaped like u.
    """
    grid = np.asarray(grid, dtype=np.float64)
    iu, iv, a, b, valid = _footprint(grid.shape, u, v)
    f00 = grid[iv, iu]
    f01 = grid[iv, iu + 1]
    f10 = grid[iv + 1, iu]
    f11 = grid[iv + 1, iu + 1]
    val = (1.0 - b) * ((1.0 - a) * f00 + a * f01) + b * ((1.0 - a) * f10 + a * f11)
    gu = (1.0 - b) * (f01 - f00) + b * (f11 - f10)
    gv = (1.0 - a) * (f10 - f00) + a * (f11 - f01)
    val = np.where(valid, val, 0.0)
    gu = np.where(valid, gu, 0.0)
    gv = np.where(valid, gv, 0.0)
    return val, gu, gv, valid


def bilinear_volume(vol, u, v):
    """Bilinearly sample an H x W x K volume at N points.

    Returns (values (N, K), d/du (N, K), d/dv (N, K), valid (N,)).
    """
    vol = np.asarray(vol, dtype=np.float64)
    iu, iv, a, b, valid = _footprint(vol.shape[:2], u, v)
    f00 = vol[iv, iu, :]
    f01 = vol[iv, iu + 1, :]
    f10 = vol[iv + 1, iu, :]
    f11 = vol[iv + 1, iu + 1, :]
    a = a[:, None]
    b = b[:, None]
    val = (1.0 - b) * ((1.0 - a) * f00 + a * f01) + b * ((1.0 - a) * f10 + a * f11)
    gu = (1.0 - b) * (f01 - f00) + b * (f11 - f10)
    gv = (1.0 - a) * (f10 - f00) + a * (f11 - f01)
    keep = valid[:, None]
    return np.where(keep, val, 0.0), np.where(keep, gu, 0.0), np.where(keep, gv, 0.0), valid


def bilinear_volume_values(vol, u, v):
    """Like bilinear_volume but values only (skips gradient work)."""
    vol = np.asarray(vol, dtype=np.float64)
    iu, iv, a, b, valid = _footprint(vol.shape[:2], u, v)
    f00 = vol[iv, iu, :]
    f01 = vol[iv, iu + 1, :]
    f10 = vol[iv + 1, iu, :]
    f11 = vol[iv + 1, iu + 1, :]
    a = a[:, None]
    b = b[:, None]
    val = (1.0 - b) * ((1.0 - a) * f00 + a * f01) + b * ((1.0 - a) * f10 + a * f11)
    return np.where(valid[:, None], val, 0.0), valid
