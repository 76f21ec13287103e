"""Closed-form multiply-accumulate and parameter accounting for a NetworkSpec.

Convolutions cost ``kh*kw*Cin*Cout*H'*W'`` MACs.  Batch norm, activations,
shortcut adds and pooling are charged one MAC per element they touch.
The samplers are charged as the two separable contractions they are
(rows first), either densely or with the nonzero bound of the
interval-run form.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .autodiff import conv_output_size
from .network import NetworkSpec

CONVENTIONS = {"1xmac": 1, "2xmac": 2}


@dataclass(frozen=True)
class LayerCost:
    name: str
    kind: str
    macs: int
    flops: int
    params: int


@dataclass
class CostReport:
    spec_name: str
    input_size: int
    convention: str
    rows: list[LayerCost] = field(default_factory=list)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "kind", "macs", "flops", "params"])
        for r in self.rows:
            w.writerow([r.name, r.kind, r.macs, r.flops, r.params])
        return buf.getvalue()

    def format_table(self) -> str:
        width = max([len(r.name) for r in self.rows] + [4])
        lines = [f"{'name':<{width}}  {'kind':<14} {'MACs':>14} {'FLOPs':>14} {'params':>10}"]
        for r in self.rows:
            lines.append(f"{r.name:<{width}}  {r.kind:<14} {r.macs:>14,} {r.flops:>14,} {r.params:>10,}")
        lines.append(
            f"{'total':<{width}}  {'':<14} {self.total_macs:>14,} {self.total_flops:>14,} {self.total_params:>10,}"
        )
        lines.append(
            f"{self.spec_name} @ {self.input_size}x{self.input_size}: "
            f"{self.total_flops / 1e9:.3f} GFLOPs ({self.convention}), {self.total_params / 1e6:.3f}M params"
        )
        return "\n".join(lines)


class _Counter:
    def __init__(self, factor: int, sampler_mode: str):
        self.factor = factor
        self.sampler_mode = sampler_mode
        self.rows: list[LayerCost] = []

    def add(self, name: str, kind: str, macs: int, params: int = 0) -> None:
        self.rows.append(LayerCost(name, kind, int(macs), int(macs) * self.factor, int(params)))

    def conv_bn(self, name, h, k, cin, cout, stride=1, act=True) -> int:
        ho = conv_output_size(h, k, stride)
        self.add(f"{name}.conv", "conv", k * k * cin * cout * ho * ho, k * k * cin * cout)
        self.add(f"{name}.bn", "batchnorm", ho * ho * cout, 2 * cout)
        if act:
            self.add(f"{name}.relu", "relu", ho * ho * cout)
        return ho

    def residual(self, name, h, cin, width, cout, stride) -> int:
        h1 = self.conv_bn(f"{name}.conv1", h, 1, cin, width)
        h2 = self.conv_bn(f"{name}.conv2", h1, 3, width, width, stride)
        return self.conv_bn(f"{name}.conv3", h2, 1, width, cout, act=False)

    def separable(self, name, kind, hin, win, hout, wout, d) -> None:
        if self.sampler_mode == "sparse":
            macs = (hin + hout) * win * d + (win + wout) * hout * d
        else:
            macs = hout * hin * win * d + hout * wout * win * d
        self.add(name, kind, macs)


def count(spec: NetworkSpec, input_size: int | None = None, convention: str = "2xmac", sampler_mode: str = "dense") -> CostReport:
    """Per-layer cost table for ``spec`` at ``input_size`` (defaults to the spec's own)."""
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {sorted(CONVENTIONS)}")
    if sampler_mode not in ("dense", "sparse"):
        raise ValueError("sampler_mode must be 'dense' or 'sparse'")
    if input_size is not None and input_size != spec.input_size:
        import dataclasses

        spec = dataclasses.replace(spec, input_size=input_size)
    spec.validate()
    c = _Counter(CONVENTIONS[convention], sampler_mode)

    h = spec.input_size
    if spec.stem == "cifar":
        h = c.conv_bn("stem.conv1", h, 3, 3, spec.stem_width)
    else:
        half = spec.stem_width // 2
        h = c.conv_bn("stem.conv1", h, 3, 3, half, 2)
        h = c.conv_bn("stem.conv2", h, 3, half, half)
        h = c.conv_bn("stem.conv3", h, 3, half, spec.stem_width)
        ho = conv_output_size(h, 3, 2)
        c.add("stem.maxpool", "maxpool", 9 * ho * ho * spec.stem_width)
        h = ho

    cin = spec.stem_width
    kind = spec.variant.kind
    for gi, g in enumerate(spec.groups, start=1):
        cout = g.width * spec.expansion
        for bi in range(1, g.blocks + 1):
            name = f"g{gi}.b{bi}"
            stride = g.stride if bi == 1 else 1
            if g.sampling_size is not None and bi > 1:
                hr, wr = g.sampling_size
                if kind == "adaptive":
                    k = spec.saliency_kernel
                    c.add(f"{name}.saliency.conv", "conv", k * k * cin * h * h, k * k * cin)
                    c.add(f"{name}.saliency.bn", "batchnorm", h * h, 2)
                    c.add(f"{name}.saliency.sigmoid", "sigmoid", h * h)
                if kind in ("adaptive", "uniform-mechanism"):
                    c.add(f"{name}.weights", "weights", 2 * h * h + hr * h + wr * h)
                    c.separable(f"{name}.sample", "sample", h, h, hr, wr, cin)
                    ho = c.residual(name, hr, cin, g.width, cout, 1)
                    c.separable(f"{name}.inverse", "inverse_sample", hr, wr, h, h, cout)
                elif kind == "bilinear":
                    c.add(f"{name}.down", "bilinear", 4 * hr * wr * cin)
                    ho = c.residual(name, hr, cin, g.width, cout, 1)
                    c.add(f"{name}.up", "bilinear", 4 * h * h * cout)
                else:
                    k, s = spec.variant.dconv_kernel, spec.variant.dconv_stride
                    hd = conv_output_size(h, k, s)
                    c.add(f"{name}.dconv", "depthwise_conv", k * k * cin * hd * hd, k * k * cin)
                    ho = c.residual(name, hd, cin, g.width, cout, 1)
                    c.add(f"{name}.up", "bilinear", 4 * h * h * cout)
                c.add(f"{name}.add", "add", h * h * cout)
                c.add(f"{name}.relu", "relu", h * h * cout)
                continue
            ho = c.residual(name, h, cin, g.width, cout, stride)
            if stride != 1 or cin != cout:
                hp = h
                if stride != 1:
                    hp = h // stride
                    c.add(f"{name}.proj.pool", "avgpool", h * h * cin)
                c.conv_bn(f"{name}.proj", hp, 1, cin, cout, act=False)
            c.add(f"{name}.add", "add", ho * ho * cout)
            c.add(f"{name}.relu", "relu", ho * ho * cout)
            h, cin = ho, cout
    c.add("head.pool", "avgpool", h * h * cin)
    c.add("head.fc", "linear", cin * spec.num_classes, cin * spec.num_classes + spec.num_classes)
    return CostReport(spec.name, spec.input_size, convention, c.rows)
