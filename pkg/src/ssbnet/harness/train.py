"""Training and evaluation loops on CIFAR-10-format data."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff import OptimizerState, no_grad, sgd_step, softmax_cross_entropy
from ..checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..errors import NumericError
from ..network import Network, build_network
from .config import RunConfig
from .data import augment, check_dataset, load_split, normalize

METRICS_FIELDS = ("epoch", "train_loss", "train_acc", "val_acc", "wall_time")
CHECKPOINT_NAME = "checkpoint.ssb"
METRICS_NAME = "metrics.csv"


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    wall_time: float

    def row(self) -> list[str]:
        return [str(self.epoch), repr(self.train_loss), repr(self.train_acc), repr(self.val_acc), f"{self.wall_time:.3f}"]


def read_metrics(path: str | Path) -> list[EpochMetrics]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            EpochMetrics(int(r["epoch"]), float(r["train_loss"]), float(r["train_acc"]), float(r["val_acc"]), float(r["wall_time"]))
            for r in reader
        ]


@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    checkpoint: Path
    metrics_path: Path


def evaluate(net: Network, images: np.ndarray, labels: np.ndarray, batch_size: int = 250) -> float:
    """Top-1 accuracy with BN in inference mode."""
    correct = 0
    with no_grad():
        for lo in range(0, len(labels), batch_size):
            logits = net(normalize(images[lo : lo + batch_size]), training=False)
            correct += int((logits.data.argmax(axis=1) == labels[lo : lo + batch_size]).sum())
    return correct / len(labels)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    # drop the ragged tail so batch statistics always see a full batch
    perm = rng.permutation(n)
    steps = max(n // batch_size, 1)
    return [perm[i * batch_size : (i + 1) * batch_size] for i in range(steps)]


def _snapshot_bn(net: Network) -> list[tuple[np.ndarray, np.ndarray]]:
    return [(bn.running_mean.copy(), bn.running_var.copy()) for bn in net.batchnorms.values()]


def _restore_bn(net: Network, snap) -> None:
    for bn, (m, v) in zip(net.batchnorms.values(), snap):
        bn.running_mean[...] = m
        bn.running_var[...] = v


def _run_epoch(net, cfg, images, labels, rng, epoch, state: OptimizerState | None) -> tuple[float, float]:
    """One pass in training mode; with ``state=None`` nothing is updated (the epoch-0 probe)."""
    batches = _batches(len(labels), cfg.batch_size, rng)
    total_loss, correct, seen = 0.0, 0, 0
    for step, idx in enumerate(batches):
        x = images[idx]
        if cfg.augment:
            x = augment(x, rng)
        y = labels[idx]
        if state is None:
            with no_grad():
                logits = net(normalize(x), training=True)
                loss = softmax_cross_entropy(logits, y)
        else:
            logits = net(normalize(x), training=True)
            loss = softmax_cross_entropy(logits, y)
            loss.backward()
            state.lr = cfg.lr_at(epoch, step, len(batches))
            sgd_step(net.params, state)
        total_loss += float(loss.item()) * len(y)
        correct += int((logits.data.argmax(axis=1) == y).sum())
        seen += len(y)
    return total_loss / seen, correct / seen


def load_data(cfg: RunConfig):
    train = load_split(cfg.data, "train", cfg.train_subset)
    val = load_split(cfg.data, "test", cfg.val_subset)
    return train, val


def train(cfg: RunConfig, threads: int | None = None, log=None) -> TrainResult:
    """Train per ``cfg``; writes the metrics log row by row and the final checkpoint.

    Outputs other than the ``wall_time`` column depend only on the config
    (including its seed) and the BLAS thread count.
    """
    cfg.validate_paths()
    spec = cfg.network_spec()
    (x_train, y_train), (x_val, y_val) = load_data(cfg)
    net = build_network(spec, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = OptimizerState(cfg.lr, cfg.momentum, cfg.weight_decay)

    out = Path(cfg.out)
    metrics_path = out / METRICS_NAME
    start = time.perf_counter()
    rows: list[EpochMetrics] = []
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_FIELDS)
        for epoch in range(cfg.epochs + 1):
            if epoch == 0:
                snap = _snapshot_bn(net)
                loss, acc = _run_epoch(net, cfg, x_train, y_train, np.random.default_rng(cfg.seed + 1), 0, None)
                _restore_bn(net, snap)
            else:
                loss, acc = _run_epoch(net, cfg, x_train, y_train, rng, epoch - 1, state)
            if not math.isfinite(loss):
                raise NumericError(f"training loss became {loss} in epoch {epoch}")
            val_acc = evaluate(net, x_val, y_val, cfg.eval_batch_size)
            m = EpochMetrics(epoch, loss, acc, val_acc, time.perf_counter() - start)
            writer.writerow(m.row())
            fh.flush()
            rows.append(m)
            if log is not None:
                log(f"epoch {epoch}: train_loss={loss:.4f} train_acc={acc:.4f} val_acc={val_acc:.4f} ({m.wall_time:.1f}s)")

    ckpt_path = out / CHECKPOINT_NAME
    meta = {"epochs": cfg.epochs, "seed": cfg.seed, "num_classes": spec.num_classes}
    if threads is not None:
        meta["threads"] = threads
    save_checkpoint(ckpt_path, Checkpoint(dict(net.state_dict()), meta))
    return TrainResult(rows, ckpt_path, metrics_path)


def restore_network(cfg: RunConfig, checkpoint: str | Path) -> Network:
    """Build the network described by ``cfg`` and load ``checkpoint`` into it (names and shapes checked)."""
    net = build_network(cfg.network_spec(), cfg.seed)
    net.load_state_dict(load_checkpoint(checkpoint).tensors)
    return net


def evaluate_checkpoint(cfg: RunConfig, checkpoint: str | Path | None) -> float:
    """Top-1 accuracy on the (possibly subset) test batch; a fresh network when ``checkpoint`` is None."""
    check_dataset(cfg.data)
    net = restore_network(cfg, checkpoint) if checkpoint is not None else build_network(cfg.network_spec(), cfg.seed)
    x_val, y_val = load_split(cfg.data, "test", cfg.val_subset)
    return evaluate(net, x_val, y_val, cfg.eval_batch_size)
