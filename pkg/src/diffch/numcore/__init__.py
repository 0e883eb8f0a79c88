"""Minimal float64 tensor library with reverse-mode autodiff and optimisers."""

from .optim import OptimizerState, optimizer_step
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    gelu,
    getitem,
    layer_norm,
    linear_map,
    log,
    matmul,
    mean,
    mul,
    pad_last,
    power,
    reshape,
    silu,
    softmax,
    sq_norm_rows,
    sqrt,
    sub,
    swapaxes,
    take,
    tanh,
    tsum,
)

__all__ = [
    "OptimizerState", "optimizer_step", "Tape", "Tensor", "add", "as_tensor",
    "backward", "concat", "div", "exp", "gelu", "getitem", "layer_norm", "linear_map", "log",
    "matmul", "mean", "mul", "pad_last", "power", "reshape", "silu", "softmax",
    "sq_norm_rows", "sqrt", "sub", "swapaxes", "take", "tanh", "tsum",
]
