"""Half-pixel (align_corners=False) bilinear resizing as a separable matrix product."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..errors import ShapeError
from .ops import resample


def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``[n_out, n_in]`` interpolation matrix; source coordinates are clamped at the borders."""
    if n_in < 1 or n_out < 1:
        raise ShapeError(f"bilinear_matrix: sizes must be >= 1, got {n_in} -> {n_out}")
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Resize ``x[N, H, W, C]`` to ``out_h x out_w``; differentiable in ``x``."""
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resize: expected [N, H, W, C], got {x.shape}")
    my = Tensor._wrap(bilinear_matrix(x.shape[1], out_h))
    mx = Tensor._wrap(bilinear_matrix(x.shape[2], out_w))
    return resample(x, my, mx, 1.0)


def bilinear_resize_array(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Array version for ``[H, W, C]`` or ``[N, H, W, C]`` input."""
    x = np.asarray(x)
    squeeze = x.ndim == 3
    x4 = x[None] if squeeze else x
    out = bilinear_resize(Tensor._wrap(x4), out_h, out_w).data
    return out[0] if squeeze else out
