"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SSBCKPT1"
    u32 tensor count
    per tensor:
        u32 name length, UTF-8 name
        u32 rank, rank x u64 dims
        f32 payload, row-major

Training metadata travels as rank-0 tensors under ``meta/``; integer
metadata must stay below 2**24 to survive the f32 round trip.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"SSBCKPT1"
META_PREFIX = "meta/"
_MAX_EXACT_INT = 2**24


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, float] = field(default_factory=dict)


def save_checkpoint(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    entries: list[tuple[str, np.ndarray]] = []
    for key, value in sorted(ckpt.metadata.items()):
        v = float(value)
        if v.is_integer() and abs(v) >= _MAX_EXACT_INT:
            raise DataError(f"checkpoint metadata {key}={value} is not exactly representable as f32")
        entries.append((META_PREFIX + key, np.asarray(v, dtype="<f4")))
    for name, arr in ckpt.tensors.items():
        if name.startswith(META_PREFIX):
            raise DataError(f"tensor name {name!r} uses the reserved {META_PREFIX!r} prefix")
        entries.append((name, np.asarray(arr)))

    parts = [MAGIC, struct.pack("<I", len(entries))]
    for name, arr in entries:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = Path(f"{os.fspath(path)}.tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataError(f"{self.path}: truncated checkpoint while reading {what} at offset {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    r = _Reader(buf, path)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise DataError(f"{path}: not an SSB checkpoint (bad magic or unsupported version {magic!r})")
    count = r.u32("tensor count")
    ckpt = Checkpoint()
    for _ in range(count):
        name_len = r.u32("name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: tensor name is not valid UTF-8 at offset {r.pos}") from exc
        rank = r.u32(f"rank of {name}")
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank, f"dims of {name}"))
        size = int(np.prod(dims, dtype=np.uint64)) if rank else 1
        payload = r.take(4 * size, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        if name.startswith(META_PREFIX):
            ckpt.metadata[name[len(META_PREFIX) :]] = float(arr)
        else:
            ckpt.tensors[name] = arr
    if r.pos != len(buf):
        raise DataError(f"{path}: {len(buf) - r.pos} trailing bytes after the last tensor")
    return ckpt
