"""Differentiable tensor engine: tape autodiff, layers, optimizers, RNG."""

from . import nn, optim
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .rng import RandomStream
from .tensor import (
    Graph,
    GraphError,
    NumericError,
    ShapeError,
    Tensor,
    absolute,
    add,
    apply_mask,
    concat,
    constant,
    conv1d,
    default_dtype,
    film,
    gather_rows,
    getitem,
    group_norm,
    l1,
    layer_norm,
    matmul,
    mse,
    mul,
    parameter,
    relu,
    repeat_interleave,
    reshape,
    reroute_gradient,
    sdpa,
    set_default_dtype,
    silu,
    sinusoidal_embedding,
    softmax,
    stop_gradient,
    sub,
    swapaxes,
    tmean,
    transpose,
    tsum,
)

__all__ = [
    "nn",
    "optim",
    "RandomStream",
    "Graph",
    "GraphError",
    "NumericError",
    "ShapeError",
    "Tensor",
    "check_gradients",
    "numeric_gradient",
    "relative_error",
    "set_default_dtype",
    "default_dtype",
    "parameter",
    "constant",
    "add",
    "sub",
    "mul",
    "matmul",
    "conv1d",
    "group_norm",
    "layer_norm",
    "softmax",
    "relu",
    "silu",
    "absolute",
    "concat",
    "getitem",
    "apply_mask",
    "gather_rows",
    "repeat_interleave",
    "reshape",
    "transpose",
    "swapaxes",
    "tsum",
    "tmean",
    "sdpa",
    "reroute_gradient",
    "film",
    "sinusoidal_embedding",
    "stop_gradient",
    "mse",
    "l1",
]
