"""Binary PPM (P6) / PGM (P5) reading and writing, 8-bit only."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..errors import DataError


def _tokens(buf: bytes, count: int, path) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated netpbm header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_netpbm(path: str | os.PathLike) -> np.ndarray:
    """Return ``[H, W, 3]`` for P6 or ``[H, W]`` for P5 as uint8."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read image ({exc.strerror})") from exc
    (magic, w, h, maxval), pos = _tokens(buf, 4, path)
    if magic not in (b"P6", b"P5"):
        raise DataError(f"{path}: expected a binary PPM (P6) or PGM (P5), got {magic!r}")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DataError(f"{path}: malformed netpbm header") from exc
    if w < 1 or h < 1 or maxval != 255:
        raise DataError(f"{path}: only 8-bit images with positive size are supported")
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise DataError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, channels)
    return img if channels == 3 else img[:, :, 0]


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_ppm(path: str | os.PathLike, img: np.ndarray) -> None:
    img = to_uint8(img) if np.asarray(img).dtype != np.uint8 else np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"write_ppm: expected [H, W, 3], got {img.shape}")
    h, w, _ = img.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    img = to_uint8(img) if np.asarray(img).dtype != np.uint8 else np.asarray(img)
    if img.ndim != 2:
        raise DataError(f"write_pgm: expected [H, W], got {img.shape}")
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes())
