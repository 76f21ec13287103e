"""Adaptive saliency sampling: weights, dense/sparse kernels, graph ops and ablation samplers."""

from .bilinear import bilinear_matrix, bilinear_resize, bilinear_resize_array
from .ops import (
    RunSet,
    axis_weights,
    inverse_sample,
    inverse_sample_op,
    inverse_sample_sparse,
    resample,
    sample,
    sample_op,
    sample_sparse,
    sampler_backward,
    saliency_marginals,
)
from .weights import (
    AxisWeights,
    IntervalRuns,
    SaliencyMarginals,
    SamplingWeights,
    build_weights,
    build_weights_backward,
    marginalize,
    sampling_weights,
    uniform_weights,
)

__all__ = [
    "AxisWeights",
    "IntervalRuns",
    "RunSet",
    "SaliencyMarginals",
    "SamplingWeights",
    "axis_weights",
    "bilinear_matrix",
    "bilinear_resize",
    "bilinear_resize_array",
    "build_weights",
    "build_weights_backward",
    "inverse_sample",
    "inverse_sample_op",
    "inverse_sample_sparse",
    "marginalize",
    "resample",
    "sample",
    "sample_op",
    "sample_sparse",
    "sampler_backward",
    "saliency_marginals",
    "sampling_weights",
    "uniform_weights",
]
