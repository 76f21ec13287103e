"""Sampling as differentiable graph ops, plus the array-level API.

Gradients reach the saliency map through the weight matrices: the
resampling op yields d loss / d G, :func:`build_weights_backward` maps it
onto the marginals, and the marginal ops map that onto the map itself.
"""

from __future__ import annotations

from typing import Literal, NamedTuple

import numpy as np

from ..autodiff import Tensor, make_result, swap_last
from ..errors import ShapeError
from .kernels import contract_dense, contract_runs, resample_dense, resample_sparse
from .weights import (
    AxisWeights,
    IntervalRuns,
    SamplingWeights,
    build_weights,
    build_weights_backward,
)

Kernel = Literal["dense", "sparse"]


class RunSet(NamedTuple):
    """Runs for the two matrices applied forward and for their transposes."""

    y: IntervalRuns
    x: IntervalRuns
    y_t: IntervalRuns
    x_t: IntervalRuns


def _batched(x: np.ndarray, name: str) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"{name}: expected [H, W, D] or [N, H, W, D], got shape {x.shape}")


def _check_in(x4: np.ndarray, rows: int, cols: int, name: str) -> None:
    if x4.shape[1:3] != (rows, cols):
        raise ShapeError(f"{name}: input is {x4.shape[1]}x{x4.shape[2]} but weights expect {rows}x{cols}")


# --------------------------------------------------------------------------- arrays


def sample(x: np.ndarray, w: SamplingWeights) -> np.ndarray:
    """Adaptive downsampling ``H_r W_r * G^y X (G^x)^T`` with dense matmuls."""
    x4, squeeze = _batched(np.asarray(x), "sample")
    _check_in(x4, *w.in_shape, "sample")
    out, _ = resample_dense(x4, w.gy, w.gx, w.y.size_out * w.x.size_out)
    return out[0] if squeeze else out


def inverse_sample(yr: np.ndarray, w: SamplingWeights) -> np.ndarray:
    """Restore input resolution with the transposed weights, scaled by ``H_in W_in``."""
    y4, squeeze = _batched(np.asarray(yr), "inverse_sample")
    _check_in(y4, *w.out_shape, "inverse_sample")
    gy_t = np.swapaxes(w.gy, -1, -2)
    gx_t = np.swapaxes(w.gx, -1, -2)
    out, _ = resample_dense(y4, gy_t, gx_t, w.y.size_in * w.x.size_in)
    return out[0] if squeeze else out


def sample_sparse(x: np.ndarray, w: SamplingWeights) -> np.ndarray:
    x4, squeeze = _batched(np.asarray(x), "sample_sparse")
    _check_in(x4, *w.in_shape, "sample_sparse")
    w.y.runs.validate()
    w.x.runs.validate()
    out, _ = resample_sparse(x4, w.y.runs, w.x.runs, w.y.size_out * w.x.size_out)
    return out[0] if squeeze else out


def inverse_sample_sparse(yr: np.ndarray, w: SamplingWeights) -> np.ndarray:
    y4, squeeze = _batched(np.asarray(yr), "inverse_sample_sparse")
    _check_in(y4, *w.out_shape, "inverse_sample_sparse")
    w.y.col_runs.validate(positive_rows=False)
    w.x.col_runs.validate(positive_rows=False)
    out, _ = resample_sparse(y4, w.y.col_runs, w.x.col_runs, w.y.size_in * w.x.size_in)
    return out[0] if squeeze else out


def _weight_grads(gs, t, x4, gy, gx, runs: RunSet | None):
    """Shared backward of a separable contraction; ``gs`` already carries the scale."""
    if runs is None:
        dt = contract_dense(np.swapaxes(gx, -1, -2), gs, 2)
        dx = contract_dense(np.swapaxes(gy, -1, -2), dt, 1)
    else:
        dt = contract_runs(runs.x_t, gs, 2)
        dx = contract_runs(runs.y_t, dt, 1)
    dgx = np.einsum("nijd,niwd->njw", gs, t)
    dgy = np.einsum("niwd,nhwd->nih", dt, x4)
    if gx.ndim == 2:
        dgx = dgx.sum(axis=0)
    if gy.ndim == 2:
        dgy = dgy.sum(axis=0)
    return dx, dgy, dgx


def sampler_backward(grad_out: np.ndarray, x: np.ndarray, w: SamplingWeights):
    """Backpropagate through :func:`sample`.

    Returns ``(grad_x, grad_sy, grad_sx)``; the marginal gradients are
    w.r.t. the marginals ``w`` was built from.
    """
    if not isinstance(w, SamplingWeights) or w.y.cum_s is None or w.x.cum_s is None:
        raise ShapeError("sampler_backward: weights carry no cached cumulative sums")
    x4, squeeze = _batched(np.asarray(x, dtype=np.float64), "sampler_backward")
    g4, _ = _batched(np.asarray(grad_out, dtype=np.float64), "sampler_backward")
    _check_in(x4, *w.in_shape, "sampler_backward")
    if g4.shape[1:3] != w.out_shape:
        raise ShapeError(f"sampler_backward: grad_out spatial shape {g4.shape[1:3]} != {w.out_shape}")
    t = contract_dense(w.gy, x4, 1)
    gs = g4 * (w.y.size_out * w.x.size_out)
    dx, dgy, dgx = _weight_grads(gs, t, x4, w.gy, w.gx, None)
    gsy = build_weights_backward(w.y, dgy)
    gsx = build_weights_backward(w.x, dgx)
    if squeeze:
        return dx[0], gsy, gsx
    return dx, gsy, gsx


# --------------------------------------------------------------------------- graph ops


def _mass_op(s: Tensor, axis: int, name: str) -> Tensor:
    data = s.data.astype(np.float64)
    part = data.sum(axis=axis)
    total = part.sum(axis=-1, keepdims=True)
    if (total <= 0).any():
        raise ShapeError(f"{name}: saliency map has nonpositive total")
    out = part / total

    def backward(g):
        centred = (g - (g * out).sum(axis=-1, keepdims=True)) / total
        expanded = np.expand_dims(centred, axis)
        return (np.broadcast_to(expanded, s.shape).astype(s.dtype),)

    return make_result(out, (s,), backward, name)


def saliency_marginals(s: Tensor) -> tuple[Tensor, Tensor]:
    """Normalized row and column masses of ``s[N, H, W]`` as float64 tensors."""
    if s.ndim != 3:
        raise ShapeError(f"saliency_marginals: expected [N, H, W], got {s.shape}")
    if (s.data < 0).any():
        raise ShapeError("saliency_marginals: saliency map must be nonnegative")
    return _mass_op(s, -1, "marginal_y"), _mass_op(s, -2, "marginal_x")


def axis_weights(marginal: Tensor, r: int) -> tuple[Tensor, AxisWeights]:
    """Dense weight matrix as a graph node, with its full :class:`AxisWeights` record."""
    aw = build_weights(marginal.data, r)

    def backward(g):
        return (build_weights_backward(aw, g).astype(marginal.dtype),)

    return make_result(aw.dense, (marginal,), backward, "sampling_weights"), aw


def resample(x: Tensor, gy: Tensor, gx: Tensor, scale: float, runs: RunSet | None = None) -> Tensor:
    """``scale * gy @ x @ gx^T`` per sample, for ``x[N, H, W, D]``.

    ``gy``/``gx`` are ``[N, r, n]`` or shared ``[r, n]``.  With ``runs``
    the interval-run kernels do the spatial contractions.
    """
    if x.ndim != 4:
        raise ShapeError(f"resample: expected [N, H, W, D], got {x.shape}")
    if gy.shape[-1] != x.shape[1] or gx.shape[-1] != x.shape[2]:
        raise ShapeError(
            f"resample: weights {gy.shape[-2:]} x {gx.shape[-2:]} do not fit input {x.shape[1:3]}"
        )
    if runs is None:
        out, t = resample_dense(x.data, gy.data, gx.data, scale)
    else:
        out, t = resample_sparse(x.data, runs.y, runs.x, scale)

    def backward(g):
        gs = g * np.asarray(scale, dtype=g.dtype)
        dx, dgy, dgx = _weight_grads(gs, t, x.data, gy.data.astype(x.dtype), gx.data.astype(x.dtype), runs)
        return dx, dgy.astype(gy.dtype), dgx.astype(gx.dtype)

    return make_result(out, (x, gy, gx), backward, "resample")


def sample_op(x: Tensor, gy: Tensor, gx: Tensor, wy: AxisWeights, wx: AxisWeights, kernel: Kernel = "dense") -> Tensor:
    runs = RunSet(wy.runs, wx.runs, wy.col_runs, wx.col_runs) if kernel == "sparse" else None
    return resample(x, gy, gx, wy.size_out * wx.size_out, runs)


def inverse_sample_op(
    yr: Tensor, gy: Tensor, gx: Tensor, wy: AxisWeights, wx: AxisWeights, kernel: Kernel = "dense"
) -> Tensor:
    runs = RunSet(wy.col_runs, wx.col_runs, wy.runs, wx.runs) if kernel == "sparse" else None
    return resample(yr, swap_last(gy), swap_last(gx), wy.size_in * wx.size_in, runs)
