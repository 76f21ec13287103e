"""Dense versus interval-run timing of sample followed by inverse_sample."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError
from ..sampler import inverse_sample, inverse_sample_sparse, marginalize, sample, sample_sparse, sampling_weights
from ..sampler.kernels import resample_dense, resample_sparse

BENCH_FIELDS = ("H_in", "W_in", "H_r", "W_r", "D", "dense_ns", "sparse_ns", "speedup")
DEFAULT_GRID = ((32, 8, 64), (32, 32, 64), (64, 16, 256), (64, 64, 64))
GATE_TOLERANCE = 1e-5


@dataclass(frozen=True)
class BenchRow:
    h_in: int
    w_in: int
    h_r: int
    w_r: int
    d: int
    dense_ns: int
    sparse_ns: int

    @property
    def speedup(self) -> float:
        return self.dense_ns / self.sparse_ns

    def row(self) -> list:
        return [self.h_in, self.w_in, self.h_r, self.w_r, self.d, self.dense_ns, self.sparse_ns, f"{self.speedup:.3f}"]


def _median_ns(fn, reps: int, warmup: int) -> int:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(statistics.median(times))


def correctness_gap(x: np.ndarray, w) -> float:
    """Max |dense - sparse| over both directions, computed in float64."""
    x64 = x.astype(np.float64)
    fwd = np.abs(sample(x64, w) - sample_sparse(x64, w)).max()
    yr = sample(x64, w)
    inv = np.abs(inverse_sample(yr, w) - inverse_sample_sparse(yr, w)).max()
    return float(max(fwd, inv))


def bench_case(h_in: int, h_r: int, d: int, reps: int = 20, warmup: int = 3, seed: int = 0) -> BenchRow:
    """Square ``h_in -> h_r`` case with ``d`` channels on a random saliency map."""
    rng = np.random.default_rng(seed)
    w = sampling_weights(marginalize(rng.random((h_in, h_in)) + 0.05), h_r, h_r)
    x = rng.standard_normal((1, h_in, h_in, d)).astype(np.float32)

    gap = correctness_gap(x, w)
    if not gap <= GATE_TOLERANCE:
        raise NumericError(f"bench: dense and sparse samplers differ by {gap:.3g} at {h_in}->{h_r}, D={d}")

    gy, gx = w.gy, w.gx
    gy_t, gx_t = np.ascontiguousarray(gy.T), np.ascontiguousarray(gx.T)
    ry, rx, ry_t, rx_t = w.y.runs, w.x.runs, w.y.col_runs, w.x.col_runs
    s_fwd, s_inv = h_r * h_r, h_in * h_in

    def dense():
        yr, _ = resample_dense(x, gy, gx, s_fwd)
        resample_dense(yr, gy_t, gx_t, s_inv)

    def sparse():
        yr, _ = resample_sparse(x, ry, rx, s_fwd)
        resample_sparse(yr, ry_t, rx_t, s_inv)

    return BenchRow(h_in, h_in, h_r, h_r, d, _median_ns(dense, reps, warmup), _median_ns(sparse, reps, warmup))


def run_bench(grid=DEFAULT_GRID, reps: int = 20, warmup: int = 3, seed: int = 0) -> list[BenchRow]:
    return [bench_case(h, r, d, reps, warmup, seed) for h, r, d in grid]


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_FIELDS)
    for r in rows:
        w.writerow(r.row())
    return buf.getvalue()
