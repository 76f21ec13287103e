"""Saliency head, SSB layer, and the ResNet-style network builder.

A network is described by a :class:`NetworkSpec`: a stem, a list of
groups of bottleneck blocks, and optionally one sampling size per group.
In a sampled group every block except the first (the one that changes
resolution and width) is wrapped as an SSB layer: its residual branch
runs on a resampled ``H_r x W_r`` copy of the input and is mapped back
before the shortcut add.
"""

from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .autodiff import (
    BatchNormParams,
    Tensor,
    add,
    avg_pool2d,
    batchnorm,
    conv2d,
    conv_output_size,
    default_dtype,
    depthwise_conv2d,
    global_avg_pool,
    linear,
    max_pool2d,
    relu,
    reshape,
    sigmoid,
)
from .errors import ConfigError, ShapeError
from .sampler import (
    AxisWeights,
    SamplingWeights,
    axis_weights,
    bilinear_resize,
    inverse_sample_op,
    sample_op,
    saliency_marginals,
)

SAMPLER_KINDS = ("adaptive", "uniform-mechanism", "bilinear", "dconv-bilinear")


@dataclass(frozen=True)
class SamplerVariant:
    kind: str = "adaptive"
    dconv_kernel: int = 5
    dconv_stride: int = 2

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler variant {self.kind!r}; expected one of {', '.join(SAMPLER_KINDS)}")
        if self.dconv_kernel % 2 == 0 or self.dconv_kernel < 1 or self.dconv_stride < 1:
            raise ConfigError("dconv kernel must be odd and positive, stride positive")


@dataclass(frozen=True)
class GroupSpec:
    blocks: int
    width: int
    stride: int = 1
    sampling_size: tuple[int, int] | None = None
    skip_first: bool = True


@dataclass(frozen=True)
class NetworkSpec:
    """Bottleneck ResNet description shared by the builder and the FLOP counter.

    ``width`` is the bottleneck width of a group; its blocks output
    ``width * expansion`` channels.  ``stem`` is ``"cifar"`` (one 3x3
    conv) or ``"resnet-d"`` (three 3x3 convs, the first strided, then a
    3x3/2 max-pool).
    """

    name: str
    groups: tuple[GroupSpec, ...]
    num_classes: int = 10
    input_size: int = 32
    stem: str = "cifar"
    stem_width: int = 16
    expansion: int = 4
    variant: SamplerVariant = field(default_factory=SamplerVariant)
    saliency_kernel: int = 1
    kernel: str = "dense"

    def validate(self) -> None:
        """Raise ``ConfigError`` naming the first violated construction rule."""
        if not self.groups:
            raise ConfigError(f"{self.name}: a network needs at least one group")
        if self.stem not in ("cifar", "resnet-d"):
            raise ConfigError(f"{self.name}: unknown stem {self.stem!r}")
        if self.saliency_kernel not in (1, 3, 5):
            raise ConfigError(f"{self.name}: saliency kernel must be 1, 3 or 5, got {self.saliency_kernel}")
        if self.kernel not in ("dense", "sparse"):
            raise ConfigError(f"{self.name}: sampler kernel must be 'dense' or 'sparse'")
        if self.num_classes < 2 or self.stem_width < 1 or self.expansion < 1:
            raise ConfigError(f"{self.name}: num_classes >= 2, stem_width >= 1 and expansion >= 1 required")
        for gi, (g, size) in enumerate(zip(self.groups, self.group_resolutions()), start=1):
            if g.blocks < 1 or g.width < 1 or g.stride not in (1, 2):
                raise ConfigError(f"{self.name}: group {gi} needs blocks >= 1, width >= 1 and stride 1 or 2")
            if g.sampling_size is None:
                continue
            if not g.skip_first:
                raise ConfigError(
                    f"{self.name}: group {gi} wraps its first block; the first block of each "
                    "group keeps its original form"
                )
            hr, wr = g.sampling_size
            if hr < 1 or wr < 1:
                raise ConfigError(f"{self.name}: group {gi} sampling size must be positive")
            if self.variant.kind != "dconv-bilinear" and (hr > size or wr > size):
                raise ConfigError(
                    f"{self.name}: group {gi} sampling size {hr}x{wr} exceeds its {size}x{size} input"
                )

    def stem_resolution(self) -> int:
        s = self.input_size
        if self.stem == "resnet-d":
            s = conv_output_size(s, 3, 2)
            s = conv_output_size(s, 3, 2)
        return s

    def group_resolutions(self) -> list[int]:
        sizes, s = [], self.stem_resolution()
        for g in self.groups:
            s = conv_output_size(s, 3, g.stride)
            sizes.append(s)
        return sizes

    def sampled_layers(self) -> list[str]:
        """Selectors ``"group-block"`` (1-based) of every wrapped block."""
        out = []
        for gi, g in enumerate(self.groups, start=1):
            if g.sampling_size is not None:
                out.extend(f"{gi}-{bi}" for bi in range(2, g.blocks + 1))
        return out

    def with_variant(self, kind: str, **kw) -> "NetworkSpec":
        return dataclasses.replace(self, variant=SamplerVariant(kind, **kw))


def apply_sampling_sizes(groups: tuple[GroupSpec, ...], sizes) -> tuple[GroupSpec, ...]:
    """Assign ``(M_1, ..., M_L)`` to the last ``L`` groups, ``M_l`` to the ``(L-l+1)``-th from the end."""
    sizes = list(sizes or ())
    if len(sizes) > len(groups):
        raise ConfigError(f"{len(sizes)} sampling sizes for only {len(groups)} groups")
    first = len(groups) - len(sizes)
    out = []
    for i, g in enumerate(groups):
        m = sizes[i - first] if i >= first else None
        if m is not None and not isinstance(m, (tuple, list)):
            m = (int(m), int(m))
        out.append(dataclasses.replace(g, sampling_size=None if m is None else tuple(m)))
    return tuple(out)


def micro_spec(sampling_sizes=(8, 4), variant: str = "adaptive", **kw) -> NetworkSpec:
    groups = (GroupSpec(2, 16, 1), GroupSpec(2, 32, 2), GroupSpec(2, 64, 2))
    return NetworkSpec(
        name="micro",
        groups=apply_sampling_sizes(groups, sampling_sizes),
        variant=SamplerVariant(variant),
        **kw,
    )


_RESNET_DEPTHS = {50: (3, 4, 6, 3), 101: (3, 4, 23, 3), 152: (3, 8, 36, 3)}


def resnet_d_spec(depth: int = 50, input_size: int = 224, sampling_sizes=None, num_classes: int = 1000) -> NetworkSpec:
    if depth not in _RESNET_DEPTHS:
        raise ConfigError(f"ResNet-D depth must be one of {sorted(_RESNET_DEPTHS)}")
    blocks = _RESNET_DEPTHS[depth]
    groups = tuple(GroupSpec(n, w, 1 if i == 0 else 2) for i, (n, w) in enumerate(zip(blocks, (64, 128, 256, 512))))
    prefix = "ssb-" if sampling_sizes else ""
    return NetworkSpec(
        name=f"{prefix}resnet-d-{depth}",
        groups=apply_sampling_sizes(groups, sampling_sizes),
        num_classes=num_classes,
        input_size=input_size,
        stem="resnet-d",
        stem_width=64,
    )


def spec_by_name(name: str, input_size: int | None = None) -> NetworkSpec:
    """Look up a named spec: ``micro``, ``[ssb-]resnet-d-{50,101,152}``."""
    if name == "micro":
        spec = micro_spec()
        return spec if input_size is None else dataclasses.replace(spec, input_size=input_size)
    for depth in _RESNET_DEPTHS:
        size = input_size or 224
        if name == f"resnet-d-{depth}":
            return resnet_d_spec(depth, size)
        if name == f"ssb-resnet-d-{depth}":
            return resnet_d_spec(depth, size, (16, 8, 4))
    raise ConfigError(f"unknown network {name!r}; known: micro, [ssb-]resnet-d-50/101/152")


# --------------------------------------------------------------------------- layers


class ParamStore:
    """Named parameters with order-independent, seeded initialization.

    Each tensor draws from a generator keyed on (seed, name), so adding or
    removing one layer never perturbs the initial values of the others.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.params: dict[str, Tensor] = {}
        self.bns: dict[str, BatchNormParams] = {}

    def _rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])

    def he_normal(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name}")
        data = self._rng(name).normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(default_dtype())
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def normal(self, name: str, shape: tuple[int, ...], std: float) -> Tensor:
        data = self._rng(name).normal(0.0, std, size=shape).astype(default_dtype())
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        t = Tensor(np.zeros(shape, dtype=default_dtype()), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def batchnorm(self, name: str, channels: int, gamma: float = 1.0) -> BatchNormParams:
        bn = BatchNormParams.create(channels, gamma=gamma)
        bn.gamma.name = f"{name}.gamma"
        bn.beta.name = f"{name}.beta"
        self.params[f"{name}.gamma"] = bn.gamma
        self.params[f"{name}.beta"] = bn.beta
        self.bns[name] = bn
        return bn


class ConvBN:
    def __init__(self, store: ParamStore, name: str, k: int, cin: int, cout: int, stride: int = 1, gamma: float = 1.0):
        self.name = name
        self.stride = stride
        self.w = store.he_normal(f"{name}.w", (k, k, cin, cout), k * k * cin)
        self.bn = store.batchnorm(f"{name}.bn", cout, gamma)

    def __call__(self, x: Tensor, training: bool, act: bool = True) -> Tensor:
        y = batchnorm(conv2d(x, self.w, self.stride), self.bn, training)
        return relu(y) if act else y


class Bottleneck:
    """1x1 reduce -> 3x3 (strided) -> 1x1 expand, with a ResNet-D shortcut."""

    def __init__(self, store: ParamStore, name: str, cin: int, width: int, cout: int, stride: int):
        self.name = name
        self.conv1 = ConvBN(store, f"{name}.conv1", 1, cin, width)
        self.conv2 = ConvBN(store, f"{name}.conv2", 3, width, width, stride)
        self.conv3 = ConvBN(store, f"{name}.conv3", 1, width, cout)
        self.stride = stride
        self.proj = ConvBN(store, f"{name}.proj", 1, cin, cout) if (stride != 1 or cin != cout) else None

    def residual(self, x: Tensor, training: bool) -> Tensor:
        y = self.conv1(x, training)
        y = self.conv2(y, training)
        return self.conv3(y, training, act=False)

    def shortcut(self, x: Tensor, training: bool) -> Tensor:
        if self.proj is None:
            return x
        if self.stride != 1:
            x = avg_pool2d(x, self.stride)
        return self.proj(x, training, act=False)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return relu(add(self.shortcut(x, training), self.residual(x, training)))


class SaliencyHead:
    """k x k conv to one channel, BN with gamma starting at 0, sigmoid."""

    def __init__(self, store: ParamStore, name: str, cin: int, k: int = 1):
        self.conv = ConvBN(store, name, k, cin, 1, gamma=0.0)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        s = sigmoid(self.conv(x, training, act=False))
        n, h, w, _ = s.shape
        return reshape(s, (n, h, w))


@dataclass
class SamplingTrace:
    """What an SSB layer computed for one input batch (for inspection)."""

    saliency: np.ndarray | None
    weights: SamplingWeights | None


class SSBLayer:
    """relu(X + up(f_t(down(X)))) with f_t the block's residual branch."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        block: Bottleneck,
        channels: int,
        sampling_size: tuple[int, int],
        variant: SamplerVariant,
        saliency_kernel: int = 1,
        kernel: str = "dense",
    ):
        if block.proj is not None:
            raise ConfigError(f"{name}: only blocks with identity shortcuts can be wrapped")
        self.name = name
        self.block = block
        self.sampling_size = tuple(sampling_size)
        self.variant = variant
        self.kernel = kernel
        self.head = SaliencyHead(store, f"{name}.saliency", channels, saliency_kernel) if variant.kind == "adaptive" else None
        self.dconv = None
        if variant.kind == "dconv-bilinear":
            k = variant.dconv_kernel
            self.dconv = store.he_normal(f"{name}.dconv.w", (k, k, channels), k * k)

    def weights(self, x: Tensor, training: bool) -> tuple[Tensor, Tensor, AxisWeights, AxisWeights, Tensor | None]:
        n, h, w, _ = x.shape
        hr, wr = self.sampling_size
        if hr > h or wr > w:
            raise ShapeError(f"{self.name}: sampling size {hr}x{wr} larger than input {h}x{w}")
        if self.head is not None:
            s = self.head(x, training)
            sy, sx = saliency_marginals(s)
        else:
            s = None
            sy = Tensor._wrap(np.full((n, h), 1.0 / h))
            sx = Tensor._wrap(np.full((n, w), 1.0 / w))
        gy, wy = axis_weights(sy, hr)
        gx, wx = axis_weights(sx, wr)
        return gy, gx, wy, wx, s

    def trace(self, x: Tensor, training: bool = False) -> SamplingTrace:
        if self.variant.kind not in ("adaptive", "uniform-mechanism"):
            return SamplingTrace(None, None)
        _, _, wy, wx, s = self.weights(x, training)
        return SamplingTrace(None if s is None else s.data, SamplingWeights(wy, wx))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        n, h, w, _ = x.shape
        kind = self.variant.kind
        if kind in ("adaptive", "uniform-mechanism"):
            gy, gx, wy, wx, _ = self.weights(x, training)
            xr = sample_op(x, gy, gx, wy, wx, self.kernel)
            yr = self.block.residual(xr, training)
            up = inverse_sample_op(yr, gy, gx, wy, wx, self.kernel)
        elif kind == "bilinear":
            hr, wr = self.sampling_size
            if hr > h or wr > w:
                raise ShapeError(f"{self.name}: sampling size {hr}x{wr} larger than input {h}x{w}")
            yr = self.block.residual(bilinear_resize(x, hr, wr), training)
            up = bilinear_resize(yr, h, w)
        else:
            xr = depthwise_conv2d(x, self.dconv, stride=self.variant.dconv_stride)
            yr = self.block.residual(xr, training)
            up = bilinear_resize(yr, h, w)
        return relu(add(x, up))


class Network:
    """Executable network built from a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        spec.validate()
        self.spec = spec
        self.seed = int(seed)
        store = ParamStore(seed)
        self._store = store

        if spec.stem == "cifar":
            self.stem = [ConvBN(store, "stem.conv1", 3, 3, spec.stem_width)]
        else:
            half = spec.stem_width // 2
            self.stem = [
                ConvBN(store, "stem.conv1", 3, 3, half, stride=2),
                ConvBN(store, "stem.conv2", 3, half, half),
                ConvBN(store, "stem.conv3", 3, half, spec.stem_width),
            ]

        self.blocks: list[tuple[str, Bottleneck | SSBLayer]] = []
        cin = spec.stem_width
        for gi, g in enumerate(spec.groups, start=1):
            cout = g.width * spec.expansion
            for bi in range(1, g.blocks + 1):
                name = f"g{gi}.b{bi}"
                stride = g.stride if bi == 1 else 1
                block = Bottleneck(store, name, cin, g.width, cout, stride)
                layer: Bottleneck | SSBLayer = block
                if g.sampling_size is not None and bi > 1:
                    layer = SSBLayer(
                        store, name, block, cout, g.sampling_size, spec.variant, spec.saliency_kernel, spec.kernel
                    )
                self.blocks.append((f"{gi}-{bi}", layer))
                cin = cout
        self.fc_w = store.normal("head.fc.w", (cin, spec.num_classes), np.sqrt(1.0 / cin))
        self.fc_b = store.zeros("head.fc.b", (spec.num_classes,))

    @property
    def params(self) -> dict[str, Tensor]:
        return self._store.params

    @property
    def batchnorms(self) -> dict[str, BatchNormParams]:
        return self._store.bns

    def param_count(self, include_saliency: bool = True) -> int:
        return sum(
            p.data.size for name, p in self.params.items() if include_saliency or ".saliency." not in name
        )

    def sampled_layers(self) -> list[str]:
        return [sel for sel, layer in self.blocks if isinstance(layer, SSBLayer)]

    def layer(self, selector: str) -> SSBLayer:
        for sel, layer in self.blocks:
            if sel == selector and isinstance(layer, SSBLayer):
                return layer
        valid = ", ".join(self.sampled_layers()) or "none"
        raise ConfigError(f"layer {selector!r} is not a sampled layer; valid selectors: {valid}")

    def _stem(self, x: Tensor, training: bool) -> Tensor:
        for conv in self.stem:
            x = conv(x, training)
        if self.spec.stem == "resnet-d":
            x = max_pool2d(x, 3, 2)
        return x

    def _check_input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 4 or x.shape[3] != 3:
            raise ShapeError(f"network input must be [N, H, W, 3], got {x.shape}")
        return x

    def iter_blocks(self, x, training: bool) -> Iterator[tuple[str, Bottleneck | SSBLayer, Tensor]]:
        """Yield (selector, layer, layer input) while running the backbone."""
        x = self._stem(self._check_input(x), training)
        for sel, layer in self.blocks:
            yield sel, layer, x
            x = layer(x, training)
        yield "head", None, x

    def __call__(self, x, training: bool = False) -> Tensor:
        feats = None
        for _, _, feats in self.iter_blocks(x, training):
            pass
        return linear(global_avg_pool(feats), self.fc_w, self.fc_b)

    forward = __call__

    def layer_input(self, x, selector: str) -> Tensor:
        self.layer(selector)
        for sel, _, inp in self.iter_blocks(x, training=False):
            if sel == selector:
                return inp
        raise ConfigError(f"layer {selector!r} not found")  # unreachable after layer()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.params.items()}
        for name, bn in self.batchnorms.items():
            state[f"{name}.running_mean"] = bn.running_mean
            state[f"{name}.running_var"] = bn.running_var
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = self.state_dict()
        missing = sorted(set(expected) - set(state))
        extra = sorted(set(state) - set(expected))
        if missing or extra:
            detail = f"missing {missing[:3]}" if missing else f"unexpected {extra[:3]}"
            raise ConfigError(f"checkpoint does not match network {self.spec.name}: {detail}")
        for name, arr in expected.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ConfigError(f"checkpoint tensor {name} has shape {src.shape}, network expects {arr.shape}")
            arr[...] = src


def build_network(spec: NetworkSpec, seed: int = 0) -> Network:
    return Network(spec, seed)
