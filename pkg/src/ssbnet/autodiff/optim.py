"""SGD with heavy-ball momentum and L2 weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor


@dataclass
class OptimizerState:
    lr: float
    momentum: float = 0.9
    weight_decay: float = 0.0
    buffers: dict[str, np.ndarray] = field(default_factory=dict)


def sgd_step(params: Mapping[str, Tensor], state: OptimizerState) -> None:
    """v <- mu*v + g + wd*p ; p <- p - lr*v ; then clear every grad.

    Raises if any parameter has no gradient; a missing grad almost always
    means the parameter was cut out of the graph by mistake.
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ShapeError(f"sgd_step: no gradient for {', '.join(sorted(missing)[:5])}")
    for name, p in params.items():
        g = p.grad
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        buf = state.buffers.get(name)
        if buf is None:
            buf = np.zeros_like(p.data)
            state.buffers[name] = buf
        elif buf.shape != p.shape:
            raise ShapeError(f"sgd_step: momentum buffer for {name} has shape {buf.shape}, param {p.shape}")
        buf *= state.momentum
        buf += g
        p.data -= (state.lr * buf).astype(p.dtype)
    for p in params.values():
        p.grad = None
