"""CIFAR-10 binary-format reader, augmentation and batching."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import DataError

RECORD_BYTES = 1 + 32 * 32 * 3
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
NUM_CLASSES = 10

MEAN = np.array([0.4914, 0.4822, 0.4465], dtype=np.float32)
STD = np.array([0.2470, 0.2435, 0.2616], dtype=np.float32)


def read_batch_file(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Images ``[N, 32, 32, 3]`` uint8 and labels ``[N]`` int64 from one binary batch."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from exc
    if len(raw) == 0:
        raise DataError(f"{path}: empty file")
    if len(raw) % RECORD_BYTES:
        offset = (len(raw) // RECORD_BYTES) * RECORD_BYTES
        raise DataError(
            f"{path}: corrupt record length; partial record of {len(raw) - offset} bytes at offset {offset}"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= NUM_CLASSES)
    if bad.size:
        raise DataError(f"{path}: label {labels[bad[0]]} out of range at offset {bad[0] * RECORD_BYTES}")
    images = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(images), labels


def check_dataset(root: str | os.PathLike) -> None:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset directory {root} does not exist")
    missing = [f for f in TRAIN_FILES + (TEST_FILE,) if not (root / f).is_file()]
    if missing:
        raise DataError(f"dataset directory {root} lacks {', '.join(missing)}")


def load_split(root: str | os.PathLike, split: str, limit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``split`` is "train" (the five batches concatenated) or "test".  ``limit`` keeps the first records."""
    root = Path(root)
    files = TRAIN_FILES if split == "train" else (TEST_FILE,)
    images, labels, total = [], [], 0
    for name in files:
        x, y = read_batch_file(root / name)
        images.append(x)
        labels.append(y)
        total += len(y)
        if limit is not None and total >= limit:
            break
    x = np.concatenate(images)
    y = np.concatenate(labels)
    if limit is not None:
        x, y = x[:limit], y[:limit]
    return x, y


def write_batch_file(path: str | os.PathLike, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of :func:`read_batch_file`; used to build fixture datasets."""
    images = np.asarray(images, dtype=np.uint8)
    rec = np.empty((len(labels), RECORD_BYTES), dtype=np.uint8)
    rec[:, 0] = labels
    rec[:, 1:] = images.transpose(0, 3, 1, 2).reshape(len(labels), -1)
    Path(path).write_bytes(rec.tobytes())


def normalize(images: np.ndarray) -> np.ndarray:
    return ((images.astype(np.float32) / 255.0) - MEAN) / STD


def augment(images: np.ndarray, rng: np.random.Generator, pad: int = 4) -> np.ndarray:
    """Zero-pad, random crop back to size, random horizontal flip."""
    n, h, w, _ = images.shape
    padded = np.pad(images, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    dy = rng.integers(0, 2 * pad + 1, size=n)
    dx = rng.integers(0, 2 * pad + 1, size=n)
    flip = rng.random(n) < 0.5
    rows = dy[:, None] + np.arange(h)
    cols = dx[:, None] + np.arange(w)
    cols = np.where(flip[:, None], cols[:, ::-1], cols)
    return padded[np.arange(n)[:, None, None], rows[:, :, None], cols[:, None, :]]
