"""Differentiable primitives.  Image tensors are laid out N, H, W, C."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, default_dtype, make_result


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no implicit broadcasting)")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return make_result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    x, y = a.data, b.data
    return make_result(x * y, (a, b), lambda g: (g * y, g * x), "mul")


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return make_result(
        np.asarray(x.data.sum(), dtype=x.dtype),
        (x,),
        lambda g: (np.full(shape, g, dtype=x.dtype),),
        "sum",
    )


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from exc
    return make_result(out, (x,), lambda g: (g.reshape(old),), "reshape")


def swap_last(x: Tensor) -> Tensor:
    """Transpose the last two axes."""
    if x.ndim < 2:
        raise ShapeError(f"swap_last: need at least 2 dims, got {x.shape}")
    out = np.ascontiguousarray(np.swapaxes(x.data, -1, -2))
    return make_result(out, (x,), lambda g: (np.ascontiguousarray(np.swapaxes(g, -1, -2)),), "swap_last")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    e = np.exp(-np.abs(x.data))
    out = np.where(x.data >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
    return make_result(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def global_avg_pool(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected N,H,W,C, got {x.shape}")
    n, h, w, c = x.shape

    def backward(g):
        return (np.broadcast_to(g[:, None, None, :] / (h * w), x.shape).astype(x.dtype),)

    return make_result(x.data.mean(axis=(1, 2)), (x,), backward, "global_avg_pool")


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k x k average pooling; spatial dims must divide by k."""
    n, h, w, c = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool2d: spatial dims {h}x{w} not divisible by {k}")
    out = x.data.reshape(n, h // k, k, w // k, k, c).mean(axis=(2, 4))

    def backward(g):
        gx = np.repeat(np.repeat(g, k, axis=1), k, axis=2) / (k * k)
        return (gx.astype(x.dtype),)

    return make_result(out, (x,), backward, "avg_pool2d")


def _pads(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k - size, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if size < k:
            raise ShapeError(f"valid padding: input {size} smaller than kernel {k}")
        return (size - k) // stride + 1, 0, 0
    raise ShapeError(f"unknown padding mode {padding!r}")


def conv_output_size(size: int, k: int, stride: int, padding: str = "same") -> int:
    return _pads(size, k, stride, padding)[0]


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int):
    for i in range(kh):
        for j in range(kw):
            yield i, j, (
                slice(None),
                slice(i, i + stride * (ho - 1) + 1, stride),
                slice(j, j + stride * (wo - 1) + 1, stride),
            )


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Cross-correlation of x[N,H,W,Cin] with w[kh,kw,Cin,Cout]."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {w.shape}")
    n, h, wd, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels but kernel expects {wcin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    ho, pt, pb = _pads(h, kh, stride, padding)
    wo, pl, pr = _pads(wd, kw, stride, padding)
    w2 = w.data.reshape(kh * kw * cin, cout)

    if kh == kw == 1 and stride == 1:
        cols = x.data.reshape(-1, cin)
        out = (cols @ w2).reshape(n, ho, wo, cout)

        def backward(g):
            g2 = g.reshape(-1, cout)
            return (g2 @ w2.T).reshape(x.shape), (cols.T @ g2).reshape(w.shape)

        return make_result(out, (x, w), backward, "conv2d")

    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if pt + pb + pl + pr else x.data
    cols = np.empty((n, ho, wo, kh * kw, cin), dtype=x.dtype)
    for i, j, sl in _windows(xp, kh, kw, stride, ho, wo):
        cols[:, :, :, i * kw + j, :] = xp[sl]
    cols = cols.reshape(-1, kh * kw * cin)
    out = (cols @ w2).reshape(n, ho, wo, cout)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        dcols = (g2 @ w2.T).reshape(n, ho, wo, kh * kw, cin)
        gxp = np.zeros(xp.shape, dtype=x.dtype)
        for i, j, sl in _windows(xp, kh, kw, stride, ho, wo):
            gxp[sl] += dcols[:, :, :, i * kw + j, :]
        gx = gxp[:, pt : pt + h, pl : pl + wd, :]
        return np.ascontiguousarray(gx), gw

    return make_result(out, (x, w), backward, "conv2d")


def depthwise_conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """Per-channel cross-correlation of x[N,H,W,C] with w[kh,kw,C]."""
    if x.ndim != 4 or w.ndim != 3:
        raise ShapeError(f"depthwise_conv2d: expected x[N,H,W,C] and w[kh,kw,C], got {x.shape}, {w.shape}")
    n, h, wd, c = x.shape
    kh, kw, wc = w.shape
    if wc != c:
        raise ShapeError(f"depthwise_conv2d: input has {c} channels but kernel has {wc}")
    ho, pt, pb = _pads(h, kh, stride, padding)
    wo, pl, pr = _pads(wd, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = np.zeros((n, ho, wo, c), dtype=x.dtype)
    for i, j, sl in _windows(xp, kh, kw, stride, ho, wo):
        out += xp[sl] * w.data[i, j]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=x.dtype)
        gw = np.empty(w.shape, dtype=x.dtype)
        for i, j, sl in _windows(xp, kh, kw, stride, ho, wo):
            gw[i, j] = (g * xp[sl]).sum(axis=(0, 1, 2))
            gxp[sl] += g * w.data[i, j]
        return np.ascontiguousarray(gxp[:, pt : pt + h, pl : pl + wd, :]), gw

    return make_result(out, (x, w), backward, "depthwise_conv2d")


def max_pool2d(x: Tensor, k: int = 3, stride: int = 2, padding: str = "same") -> Tensor:
    n, h, wd, c = x.shape
    ho, pt, pb = _pads(h, k, stride, padding)
    wo, pl, pr = _pads(wd, k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=-np.inf)
    stacked = np.stack([xp[sl] for _, _, sl in _windows(xp, k, k, stride, ho, wo)], axis=3)
    arg = stacked.argmax(axis=3)
    out = np.take_along_axis(stacked, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=x.dtype)
        for idx, (_, _, sl) in enumerate(_windows(xp, k, k, stride, ho, wo)):
            gxp[sl] += np.where(arg == idx, g, 0)
        return (np.ascontiguousarray(gxp[:, pt : pt + h, pl : pl + wd, :]),)

    return make_result(np.ascontiguousarray(out), (x,), backward, "max_pool2d")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"linear: cannot multiply {x.shape} by {w.shape}")
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} does not match {w.shape[1]} outputs")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def backward(g):
        grads = [g @ w.data.T, x.data.T @ g]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    return make_result(out, parents, backward, "linear")


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    n, k = logits.shape
    if n == 0:
        raise ShapeError("softmax_cross_entropy: empty batch")
    if labels.dtype.kind not in "iu" or labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"softmax_cross_entropy: labels must be integers in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = np.asarray((logsum - z[rows, labels]).mean(), dtype=logits.dtype)

    def backward(g):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1
        return ((p * (g / n)).astype(logits.dtype),)

    return make_result(loss, (logits,), backward, "softmax_cross_entropy")


@dataclass
class BatchNormParams:
    """Learnable scale/shift plus running statistics for one BN layer."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def create(cls, channels: int, gamma: float = 1.0, momentum: float = 0.1, eps: float = 1e-5):
        dt = default_dtype()
        return cls(
            gamma=Tensor(np.full(channels, gamma, dtype=dt), requires_grad=True),
            beta=Tensor(np.zeros(channels, dtype=dt), requires_grad=True),
            running_mean=np.zeros(channels, dtype=dt),
            running_var=np.ones(channels, dtype=dt),
            momentum=momentum,
            eps=eps,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def __post_init__(self):
        c = self.gamma.shape
        if len(c) != 1 or self.beta.shape != c or self.running_mean.shape != c or self.running_var.shape != c:
            raise ShapeError("BatchNormParams: gamma, beta and running stats must share one channel length")
        if not 0 < self.momentum < 1:
            raise ShapeError(f"BatchNormParams: momentum must lie in (0, 1), got {self.momentum}")
        if self.eps <= 0:
            raise ShapeError("BatchNormParams: eps must be positive")
        if (self.running_var < 0).any():
            raise ShapeError("BatchNormParams: running_var must be nonnegative")


def batchnorm(x: Tensor, p: BatchNormParams, training: bool) -> Tensor:
    """Normalize over every axis but the last (channel) one."""
    if x.ndim < 2 or x.shape[-1] != p.channels:
        raise ShapeError(f"batchnorm: input {x.shape} does not match {p.channels} channels")
    axes = tuple(range(x.ndim - 1))
    m = x.data.size // p.channels
    if m == 0:
        raise ShapeError("batchnorm: zero-size batch")
    gamma, beta = p.gamma.data, p.beta.data

    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        mom = p.momentum
        p.running_mean[...] = (1 - mom) * p.running_mean + mom * mean
        p.running_var[...] = (1 - mom) * p.running_var + mom * var
    else:
        mean, var = p.running_mean, p.running_var
    inv_std = (1.0 / np.sqrt(var + p.eps)).astype(x.dtype)
    xhat = (x.data - mean) * inv_std
    out = gamma * xhat + beta

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma
        if training:
            dx = inv_std * (dxhat - dxhat.mean(axis=axes) - xhat * (dxhat * xhat).mean(axis=axes))
        else:
            dx = dxhat * inv_std
        return dx.astype(x.dtype), dgamma, dbeta

    return make_result(out.astype(x.dtype), (x, p.gamma, p.beta), backward, "batchnorm")
