from fatsim.autodiff.gradcheck import finite_diff_check
from fatsim.autodiff.ops import (
    add,
    concat_channels,
    conv2d,
    conv_output_size,
    mul,
    relu,
    softmax_channels,
    sum_all,
    trace_relu_patterns,
    upsample_nearest2x,
)
from fatsim.autodiff.tensor import Gradients, GradTape, TapeEntry, Tensor, compute_dtype, precision

__all__ = [
    "Gradients",
    "GradTape",
    "TapeEntry",
    "Tensor",
    "add",
    "compute_dtype",
    "concat_channels",
    "conv2d",
    "conv_output_size",
    "finite_diff_check",
    "mul",
    "precision",
    "relu",
    "softmax_channels",
    "sum_all",
    "trace_relu_patterns",
    "upsample_nearest2x",
]
