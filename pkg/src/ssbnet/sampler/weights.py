"""Saliency marginals and interval-overlap sampling weights.

A saliency map is collapsed into one normalized mass vector per axis.
Each axis is then resampled by overlapping two partitions of [0, 1]: the
input partition whose cell widths are the saliency masses, and the
uniform output partition with ``r`` equal cells.  Entry ``(i, j)`` of the
weight matrix is the length of the overlap between output cell ``i`` and
input cell ``j``.

Because both partitions are sorted, the nonzeros of every row form one
contiguous run, consecutive runs share at most one column, and the
matrix holds at most ``n + r - 1`` nonzeros.  :class:`IntervalRuns`
stores exactly that structure.

All cumulative sums are formed in float64 whatever the tensor precision,
so interval endpoints stay monotone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

NORMALIZATION_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SaliencyMarginals:
    """Per-axis normalized saliency mass: ``sy`` over rows, ``sx`` over columns."""

    sy: np.ndarray
    sx: np.ndarray


def marginalize(s: np.ndarray) -> SaliencyMarginals:
    """Row/column sums of a positive saliency map ``s[..., H, W]``, each divided by the total."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim < 2:
        raise ShapeError(f"marginalize: expected a [..., H, W] map, got shape {s.shape}")
    if not np.isfinite(s).all():
        raise ShapeError("marginalize: saliency map has non-finite entries")
    rows = s.sum(axis=-1)
    cols = s.sum(axis=-2)
    total = rows.sum(axis=-1, keepdims=True)
    if (total <= 0).any() or (s < 0).any():
        raise ShapeError("marginalize: saliency map must be nonnegative with a positive total")
    return SaliencyMarginals(sy=rows / total, sx=cols / total)


@dataclass(frozen=True)
class IntervalRuns:
    """Row-wise contiguous nonzero runs of a ``[..., r, n]`` matrix.

    ``values[..., i, :lengths[..., i]]`` are the entries of row ``i`` in
    columns ``starts[..., i]`` onward; padding past the run length is zero.
    """

    starts: np.ndarray
    lengths: np.ndarray
    values: np.ndarray
    n_cols: int

    @property
    def n_rows(self) -> int:
        return self.starts.shape[-1]

    @property
    def max_length(self) -> int:
        return self.values.shape[-1]

    def nnz(self) -> np.ndarray:
        """Nonzero count per matrix (shape = leading batch dims)."""
        return np.count_nonzero(self.values, axis=(-2, -1))

    def to_dense(self) -> np.ndarray:
        lead = self.starts.shape[:-1]
        out = np.zeros(lead + (self.n_rows, self.n_cols), dtype=self.values.dtype)
        mask = np.arange(self.max_length) < self.lengths[..., None]
        *idx, pos = np.nonzero(mask)
        cols = self.starts[tuple(idx)] + pos
        out[(*idx, cols)] = self.values[mask]
        return out

    def validate(self, positive_rows: bool = True) -> None:
        """Raise ``ShapeError`` unless the runs describe a monotone staircase.

        With ``positive_rows`` every run must carry positive mass: a
        sampling matrix row always sums to ``1/r``.
        """
        s, ln, v = self.starts, self.lengths, self.values
        if s.shape != ln.shape or v.shape[:-1] != s.shape:
            raise ShapeError("IntervalRuns: starts, lengths and values disagree in shape")
        if (ln < 1).any() or (ln > v.shape[-1]).any():
            raise ShapeError("IntervalRuns: every row needs a run of length 1..max_length")
        if (s < 0).any() or (s + ln > self.n_cols).any():
            raise ShapeError("IntervalRuns: run extends outside the matrix")
        ends = s + ln - 1
        if (np.diff(s, axis=-1) < 0).any():
            raise ShapeError("IntervalRuns: run start columns are not nondecreasing")
        if (s[..., 1:] < ends[..., :-1]).any():
            raise ShapeError("IntervalRuns: consecutive runs overlap by more than one column")
        pad = np.arange(v.shape[-1]) >= ln[..., None]
        if (v[pad] != 0).any():
            raise ShapeError("IntervalRuns: nonzero value stored past the end of a run")
        if (v < 0).any():
            raise ShapeError("IntervalRuns: negative weight")
        if positive_rows and (v.sum(axis=-1) <= 0).any():
            raise ShapeError("IntervalRuns: empty row (a sampling row must carry positive mass)")


@dataclass(frozen=True)
class AxisWeights:
    """Sampling weights for one axis: dense matrix, its runs, and the sums that built it."""

    dense: np.ndarray  # [..., r, n]
    cum_s: np.ndarray  # [..., n + 1]
    cum_u: np.ndarray  # [r + 1]
    marginal: np.ndarray  # [..., n], renormalized
    mass: np.ndarray  # [..., 1], sum of the marginal before renormalization
    runs: IntervalRuns  # rows of dense
    col_runs: IntervalRuns  # rows of dense transposed

    @property
    def size_in(self) -> int:
        return self.dense.shape[-1]

    @property
    def size_out(self) -> int:
        return self.dense.shape[-2]


@dataclass(frozen=True)
class SamplingWeights:
    y: AxisWeights
    x: AxisWeights

    @property
    def gy(self) -> np.ndarray:
        return self.y.dense

    @property
    def gx(self) -> np.ndarray:
        return self.x.dense

    @property
    def sparse_gy(self) -> IntervalRuns:
        return self.y.runs

    @property
    def sparse_gx(self) -> IntervalRuns:
        return self.x.runs

    @property
    def cum_s_y(self) -> np.ndarray:
        return self.y.cum_s

    @property
    def cum_u_y(self) -> np.ndarray:
        return self.y.cum_u

    @property
    def cum_s_x(self) -> np.ndarray:
        return self.x.cum_s

    @property
    def cum_u_x(self) -> np.ndarray:
        return self.x.cum_u

    @property
    def in_shape(self) -> tuple[int, int]:
        return self.y.size_in, self.x.size_in

    @property
    def out_shape(self) -> tuple[int, int]:
        return self.y.size_out, self.x.size_out


def _gather_runs(dense: np.ndarray, starts: np.ndarray, lengths: np.ndarray) -> IntervalRuns:
    length = int(lengths.max(initial=1))
    cols = starts[..., None] + np.arange(length)
    mask = np.arange(length) < lengths[..., None]
    cols = np.minimum(cols, dense.shape[-1] - 1)
    values = np.where(mask, np.take_along_axis(dense, cols, axis=-1), 0.0)
    return IntervalRuns(starts=starts, lengths=lengths, values=values, n_cols=dense.shape[-1])


def _runs(lo_edges, hi_edges, part_lo, n):
    # Row i of the overlap matrix covers the cells j with part_lo[j] <= lo_edges[i]
    # (the last such j) through the last j with part_lo[j] < hi_edges[i].
    first = (part_lo[..., None, :] <= lo_edges[..., :, None]).sum(axis=-1) - 1
    last = (part_lo[..., None, :] < hi_edges[..., :, None]).sum(axis=-1) - 1
    first = np.clip(first, 0, n - 1)
    last = np.clip(np.maximum(last, first), 0, n - 1)
    return first.astype(np.int64), (last - first + 1).astype(np.int64)


def build_weights(marginal, r: int) -> AxisWeights:
    """Overlap matrix between the saliency partition and a uniform ``r``-cell partition.

    ``marginal`` has shape ``[n]`` or ``[B, n]``.  It must sum to one
    within 1e-4; it is renormalized exactly before use.
    """
    s = np.asarray(marginal, dtype=np.float64)
    if s.ndim not in (1, 2) or s.shape[-1] < 1:
        raise ShapeError(f"build_weights: marginal must have shape [n] or [B, n], got {s.shape}")
    if int(r) != r or r < 1:
        raise ShapeError(f"build_weights: target size must be a positive integer, got {r}")
    r = int(r)
    if not np.isfinite(s).all() or (s < 0).any():
        raise ShapeError("build_weights: marginal must be finite and nonnegative")
    total = s.sum(axis=-1, keepdims=True)
    if (np.abs(total - 1.0) > NORMALIZATION_TOLERANCE).any():
        raise ShapeError(f"build_weights: marginal sums to {total.ravel()[0]:.6g}, expected 1")
    s = s / total
    n = s.shape[-1]

    cum_s = np.zeros(s.shape[:-1] + (n + 1,))
    cum_s[..., 1:] = np.minimum(np.cumsum(s, axis=-1), 1.0)
    cum_s[..., n] = 1.0
    cum_u = np.arange(r + 1) / r

    lo = np.maximum(cum_s[..., None, :-1], cum_u[:-1, None])
    hi = np.minimum(cum_s[..., None, 1:], cum_u[1:, None])
    dense = np.maximum(hi - lo, 0.0)

    u_lo = np.broadcast_to(cum_u[:-1], s.shape[:-1] + (r,))
    u_hi = np.broadcast_to(cum_u[1:], s.shape[:-1] + (r,))
    starts, lengths = _runs(u_lo, u_hi, cum_s[..., :-1], n)
    cstarts, clengths = _runs(cum_s[..., :-1], cum_s[..., 1:], u_lo, r)

    return AxisWeights(
        dense=dense,
        cum_s=cum_s,
        cum_u=cum_u,
        marginal=s,
        mass=total,
        runs=_gather_runs(dense, starts, lengths),
        col_runs=_gather_runs(np.swapaxes(dense, -1, -2), cstarts, clengths),
    )


def build_weights_backward(w: AxisWeights, grad_dense: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the (pre-renormalization) marginal given d loss / d dense.

    Each weight is ``max(min(c_s[j+1], c_u[i+1]) - max(c_s[j], c_u[i]), 0)``.
    Where it is positive the derivative is +1 w.r.t. ``c_s[j+1]`` when that
    endpoint is the active minimum and -1 w.r.t. ``c_s[j]`` when it is the
    active maximum; exact ties contribute 0.  ``c_s[0] = 0`` and
    ``c_s[n] = 1`` are constants.
    """
    g = np.asarray(grad_dense, dtype=np.float64) * (w.dense > 0)
    cs, cu = w.cum_s, w.cum_u
    upper_active = cs[..., None, 1:] < cu[1:, None]
    lower_active = cs[..., None, :-1] > cu[:-1, None]
    n = cs.shape[-1] - 1
    d_cum = np.zeros(cs.shape)
    d_cum[..., 1:] += (g * upper_active).sum(axis=-2)
    d_cum[..., :-1] -= (g * lower_active).sum(axis=-2)
    # c_s[k] = sum_{h<k} s_h for 1 <= k <= n-1
    inner = d_cum[..., 1:n]
    d_norm = np.zeros(w.marginal.shape)
    d_norm[..., : n - 1] = np.flip(np.cumsum(np.flip(inner, -1), axis=-1), -1)
    # through the renormalization s / sum(s)
    proj = (d_norm * w.marginal).sum(axis=-1, keepdims=True)
    return (d_norm - proj) / w.mass


def uniform_weights(h_in: int, w_in: int, h_r: int, w_r: int) -> SamplingWeights:
    """Weights from a constant saliency map: plain block partitioning."""
    return SamplingWeights(
        y=build_weights(np.full(h_in, 1.0 / h_in), h_r),
        x=build_weights(np.full(w_in, 1.0 / w_in), w_r),
    )


def sampling_weights(marginals: SaliencyMarginals, h_r: int, w_r: int) -> SamplingWeights:
    return SamplingWeights(y=build_weights(marginals.sy, h_r), x=build_weights(marginals.sx, w_r))
