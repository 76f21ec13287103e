"""JSON run configuration for training, evaluation and visualization."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..network import SAMPLER_KINDS, NetworkSpec, SamplerVariant, apply_sampling_sizes, spec_by_name
from .data import NUM_CLASSES, check_dataset

SCHEDULES = ("cosine", "step")


@dataclass
class RunConfig:
    data: str
    out: str
    spec: str = "micro"
    variant: str = "adaptive"
    sampling_sizes: list[int] | None = None
    saliency_kernel: int = 1
    sampler_kernel: str = "dense"
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: str = "cosine"
    warmup_epochs: int = 1
    step_milestones: list[int] = field(default_factory=lambda: [10, 15])
    step_gamma: float = 0.1
    seed: int = 0
    train_subset: int | None = None
    val_subset: int | None = None
    augment: bool = True
    eval_batch_size: int = 250

    def __post_init__(self):
        def positive_int(name, value, allow_none=False, minimum=1):
            if value is None and allow_none:
                return
            if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
                raise ConfigError(f"config: {name} must be an integer >= {minimum}, got {value!r}")

        positive_int("epochs", self.epochs, minimum=0)
        positive_int("batch_size", self.batch_size)
        positive_int("eval_batch_size", self.eval_batch_size)
        positive_int("warmup_epochs", self.warmup_epochs, minimum=0)
        positive_int("saliency_kernel", self.saliency_kernel)
        positive_int("seed", self.seed, minimum=0)
        positive_int("train_subset", self.train_subset, allow_none=True)
        positive_int("val_subset", self.val_subset, allow_none=True)
        for name in ("lr", "momentum", "weight_decay", "step_gamma"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ConfigError(f"config: {name} must be a finite nonnegative number, got {v!r}")
        if self.momentum >= 1:
            raise ConfigError("config: momentum must be below 1")
        if self.variant not in SAMPLER_KINDS:
            raise ConfigError(f"config: variant must be one of {', '.join(SAMPLER_KINDS)}")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"config: schedule must be one of {', '.join(SCHEDULES)}")
        if self.sampler_kernel not in ("dense", "sparse"):
            raise ConfigError("config: sampler_kernel must be 'dense' or 'sparse'")
        for name in ("data", "out"):
            if not isinstance(getattr(self, name), str) or not getattr(self, name):
                raise ConfigError(f"config: {name} must be a nonempty path string")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | os.PathLike | None = None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        missing = [k for k in ("data", "out") if k not in doc]
        if missing:
            raise ConfigError(f"config: missing required key(s) {', '.join(missing)}")
        doc = dict(doc)
        if base_dir is not None:
            for key in ("data", "out"):
                if isinstance(doc[key], str):
                    doc[key] = os.fspath(Path(base_dir) / doc[key])
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"config: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        """Read a JSON config; relative paths inside resolve against the file's directory."""
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def network_spec(self) -> NetworkSpec:
        spec = spec_by_name(self.spec, 32)
        groups = spec.groups if self.sampling_sizes is None else apply_sampling_sizes(spec.groups, self.sampling_sizes)
        spec = dataclasses.replace(
            spec,
            groups=groups,
            num_classes=NUM_CLASSES,
            variant=SamplerVariant(self.variant),
            saliency_kernel=self.saliency_kernel,
            kernel=self.sampler_kernel,
        )
        spec.validate()
        return spec

    def validate_paths(self, need_data: bool = True) -> None:
        """Fail fast on a missing dataset or an unusable output directory."""
        if need_data:
            check_dataset(self.data)
        out = Path(self.out)
        if out.exists() and not out.is_dir():
            raise ConfigError(f"output path {out} exists and is not a directory")
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")

    def lr_at(self, epoch: int, step: int, steps_per_epoch: int) -> float:
        """Learning rate for ``step`` (0-based) of ``epoch`` (0-based)."""
        if self.schedule == "step":
            return self.lr * self.step_gamma ** sum(epoch >= m for m in self.step_milestones)
        t = epoch * steps_per_epoch + step
        warm = self.warmup_epochs * steps_per_epoch
        total = self.epochs * steps_per_epoch
        if t < warm:
            return self.lr * (t + 1) / warm
        span = max(total - warm, 1)
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * (t - warm) / span))
