"""Dense tensor with tape-free reverse-mode differentiation.

Every op builds its output with :func:`make_result`, handing over the
parent tensors and a closure that maps the output gradient to one
gradient per parent.  :meth:`Tensor.backward` walks the graph in reverse
topological order and frees it afterwards.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from ..errors import NumericError, ShapeError

_state = threading.local()


def _get(name, default):
    return getattr(_state, name, default)


def default_dtype() -> np.dtype:
    """Float type used for new tensors (float32 unless inside :func:`float64_mode`)."""
    return np.dtype(_get("dtype", np.float32))


def grad_enabled() -> bool:
    return _get("grad", True)


@contextlib.contextmanager
def float64_mode() -> Iterator[None]:
    """Build tensors in 64-bit precision.  Meant for gradient verification only."""
    prev = _get("dtype", np.float32)
    _state.dtype = np.float64
    try:
        yield
    finally:
        _state.dtype = prev


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording (inference, evaluation)."""
    prev = grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """N-D float array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(default_dtype())
        elif arr.dtype != default_dtype():
            arr = arr.astype(default_dtype())
        self.data: np.ndarray = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _wrap(cls, data: np.ndarray) -> "Tensor":
        # skips the dtype coercion of __init__; ops already produce the right type
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = False
        t.name = None
        t._parents = ()
        t._backward = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # operator sugar; the implementations live in functional.py
    def __add__(self, other):
        from .functional import add

        return add(self, other)

    def __mul__(self, other):
        from .functional import mul

        return mul(self, other)

    def sum(self):
        from .functional import sum_all

        return sum_all(self)

    def backward(self) -> None:
        """Populate ``.grad`` of every ``requires_grad`` leaf reachable from this scalar."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ShapeError("backward() called on a tensor that does not require grad")

        order = _topological(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise ShapeError(
                        f"internal: gradient shape {pg.shape} does not match parent {parent.shape}"
                    )
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for node in order:
            node._parents = ()
            node._backward = None


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: BackwardFn,
    op: str = "op",
) -> Tensor:
    """Wrap ``data`` as the output of an op, recording the graph when needed."""
    if not np.isfinite(data).all():
        raise NumericError(f"{op}: produced non-finite values")
    out = Tensor._wrap(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out
