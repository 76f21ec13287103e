"""Dense and interval-run contraction kernels for separable resampling.

Both compute ``out[n, i, j, d] = scale * sum_{h, w} A[n, i, h] B[n, j, w] x[n, h, w, d]``
as two single-axis contractions, rows (y) first then columns (x).  The
dense path uses batched matmul.  The sparse path walks the
:class:`IntervalRuns` of each matrix, so its work is proportional to the
number of nonzeros instead of ``r * n``.
"""

from __future__ import annotations

import numba
import numpy as np

from ..errors import ShapeError
from .weights import IntervalRuns


@numba.njit(cache=True, nogil=True)
def _apply_runs(starts, lengths, values, x, out):
    # x[B, M, n, K] -> out[B, M, r, K]; runs may be shared across B (leading dim 1)
    nb, nm, _, nk = x.shape
    nr = starts.shape[1]
    shared = starts.shape[0] == 1
    for b in range(nb):
        bw = 0 if shared else b
        for m in range(nm):
            for i in range(nr):
                s = starts[bw, i]
                acc = out[b, m, i]
                for l in range(lengths[bw, i]):
                    v = values[bw, i, l]
                    row = x[b, m, s + l]
                    for k in range(nk):
                        acc[k] += v * row[k]


def _as_batched_runs(runs: IntervalRuns, dtype) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    st, ln, v = runs.starts, runs.lengths, runs.values
    if st.ndim == 1:
        st, ln, v = st[None], ln[None], v[None]
    return (
        np.ascontiguousarray(st, dtype=np.int64),
        np.ascontiguousarray(ln, dtype=np.int64),
        np.ascontiguousarray(v, dtype=dtype),
    )


def contract_runs(runs: IntervalRuns, x: np.ndarray, axis: int) -> np.ndarray:
    """Multiply the run-encoded ``[r, n]`` matrix into ``x[N, ...]`` along ``axis`` (1 or 2)."""
    st, ln, v = _as_batched_runs(runs, x.dtype)
    n_batch = x.shape[0]
    if st.shape[0] not in (1, n_batch):
        raise ShapeError(f"sparse weights hold {st.shape[0]} matrices for a batch of {n_batch}")
    if x.shape[axis] != runs.n_cols:
        raise ShapeError(f"sparse weights expect size {runs.n_cols} on axis {axis}, input has {x.shape[axis]}")
    lead = int(np.prod(x.shape[1:axis], dtype=np.int64))
    tail = int(np.prod(x.shape[axis + 1 :], dtype=np.int64))
    x4 = np.ascontiguousarray(x).reshape(n_batch, lead, runs.n_cols, tail)
    out = np.zeros((n_batch, lead, runs.n_rows, tail), dtype=x.dtype)
    _apply_runs(st, ln, v, x4, out)
    return out.reshape(x.shape[:axis] + (runs.n_rows,) + x.shape[axis + 1 :])


def contract_dense(a: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """Multiply ``a[(N,) r, n]`` into ``x[N, ...]`` along ``axis`` (1 or 2)."""
    a = a.astype(x.dtype, copy=False)
    if a.shape[-1] != x.shape[axis]:
        raise ShapeError(f"weights expect size {a.shape[-1]} on axis {axis}, input has {x.shape[axis]}")
    if a.ndim == 3 and a.shape[0] != x.shape[0]:
        raise ShapeError(f"dense weights hold {a.shape[0]} matrices for a batch of {x.shape[0]}")
    if axis == 1:
        n, h = x.shape[:2]
        out = np.matmul(a, x.reshape(n, h, -1))
        return out.reshape((n, a.shape[-2]) + x.shape[2:])
    if axis == 2:
        am = a[:, None] if a.ndim == 3 else a
        return np.matmul(am, x)
    raise ShapeError(f"contract_dense: unsupported axis {axis}")


def resample_dense(x: np.ndarray, gy: np.ndarray, gx: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Returns (output, intermediate after the y contraction)."""
    t = contract_dense(gy, x, 1)
    out = contract_dense(gx, t, 2)
    out *= scale
    return out, t


def resample_sparse(x: np.ndarray, ry: IntervalRuns, rx: IntervalRuns, scale: float) -> tuple[np.ndarray, np.ndarray]:
    t = contract_runs(ry, x, 1)
    out = contract_runs(rx, t, 2)
    out *= scale
    return out, t
