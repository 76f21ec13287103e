"""Central finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, float64_mode


def numerical_grad(f: Callable[[], float], arr: np.ndarray, h: float) -> np.ndarray:
    """d f / d arr by central differences, perturbing ``arr`` in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max elementwise |a - n| / max(|a|, |n|), floored at 1e-5 of the gradient scale.

    The floor keeps entries that are zero up to round-off from dominating.
    """
    scale = max(1.0, float(np.abs(numeric).max(initial=0.0)))
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-5 * scale)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
) -> list[float]:
    """Compare backprop against central differences for every tensor in ``tensors``.

    ``loss_fn`` must rebuild the graph from the current ``.data`` of the
    tensors each call and return a scalar.  Run inside :func:`float64_mode`
    with float64 tensors.  Returns one relative error per tensor.
    """
    for t in tensors:
        if t.dtype != np.float64:
            raise TypeError("check_gradients needs float64 tensors")
        t.grad = None
    loss_fn().backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]
    errors = []
    for t, a in zip(tensors, analytic):
        scale = max(1.0, float(np.abs(t.data).max(initial=0.0)))
        num = numerical_grad(lambda: loss_fn().item(), t.data, h * scale)
        errors.append(relative_error(a, num))
    return errors


__all__ = ["check_gradients", "numerical_grad", "relative_error", "float64_mode"]
