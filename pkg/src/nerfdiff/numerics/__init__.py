"""Tensor algebra, reverse-mode autodiff, Adam, and the SFLD1 checkpoint format."""

from nerfdiff.numerics.checkpoint import load_arrays, save_arrays
from nerfdiff.numerics.conv import add_channel, avg_pool2, conv2d, upsample2
from nerfdiff.numerics.optim import Adam, OptimState, adam_step
from nerfdiff.numerics.tensor import (
    DTYPE,
    Graph,
    Tensor,
    active_graph,
    add,
    as_tensor,
    backward,
    concat,
    cos,
    custom,
    div,
    elementwise,
    exp,
    linear,
    matmul,
    mean,
    mse,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    sin,
    softplus,
    square,
    sub,
    take,
)
from nerfdiff.numerics.tensor import sum as tsum

__all__ = [
    "DTYPE", "Graph", "Tensor", "active_graph", "add", "as_tensor", "backward", "concat",
    "cos", "custom", "div", "elementwise", "exp", "linear", "matmul", "mean", "mse", "mul",
    "neg", "relu", "reshape", "sigmoid", "sin", "softplus", "square", "sub", "take", "tsum",
    "conv2d", "avg_pool2", "upsample2", "add_channel", "Adam", "OptimState", "adam_step",
    "save_arrays", "load_arrays",
]
