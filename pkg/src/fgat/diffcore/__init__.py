"""Differentiable numeric substrate: tensors, ops, reverse pass, Adam."""

from fgat.diffcore.optim import Adam
from fgat.diffcore.tensor import (
    Tensor,
    add,
    backward,
    concat,
    div,
    elu,
    exp,
    gather,
    is_grad_enabled,
    leaky_relu,
    log,
    log_softmax,
    matmul,
    mul,
    neg,
    no_grad,
    pow_scalar,
    relu,
    reshape,
    scatter_add,
    segment_softmax,
    slice_rows,
    softmax,
    sub,
    tmax,
    tmean,
    tsum,
)

__all__ = [
    "Adam",
    "Tensor",
    "add",
    "backward",
    "concat",
    "div",
    "elu",
    "exp",
    "gather",
    "is_grad_enabled",
    "leaky_relu",
    "log",
    "log_softmax",
    "matmul",
    "mul",
    "neg",
    "no_grad",
    "pow_scalar",
    "relu",
    "reshape",
    "scatter_add",
    "segment_softmax",
    "slice_rows",
    "softmax",
    "sub",
    "tmax",
    "tmean",
    "tsum",
]
