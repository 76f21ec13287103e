"""Minimal NHWC tensor engine with reverse-mode differentiation."""

from .functional import (
    BatchNormParams,
    add,
    avg_pool2d,
    batchnorm,
    conv2d,
    conv_output_size,
    depthwise_conv2d,
    global_avg_pool,
    linear,
    max_pool2d,
    mul,
    relu,
    reshape,
    sigmoid,
    softmax_cross_entropy,
    sum_all,
    swap_last,
)
from .optim import OptimizerState, sgd_step
from .tensor import Tensor, as_tensor, default_dtype, float64_mode, grad_enabled, make_result, no_grad

__all__ = [
    "BatchNormParams",
    "OptimizerState",
    "Tensor",
    "add",
    "as_tensor",
    "avg_pool2d",
    "batchnorm",
    "conv2d",
    "conv_output_size",
    "default_dtype",
    "depthwise_conv2d",
    "float64_mode",
    "global_avg_pool",
    "grad_enabled",
    "linear",
    "make_result",
    "max_pool2d",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "sgd_step",
    "sigmoid",
    "softmax_cross_entropy",
    "sum_all",
    "swap_last",
]
