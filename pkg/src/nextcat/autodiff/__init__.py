"""Minimal reverse-mode automatic differentiation over numpy arrays."""
from .optim import SGD, Adam, clip_grad_norm
from .tensor import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    conv2d,
    cross_entropy,
    embedding_lookup,
    exp,
    layer_norm,
    log,
    log_softmax,
    matmul,
    max_pool2d,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_,
    softmax,
    sum_,
    tanh,
    transpose,
)

__all__ = [
    "SGD", "Adam", "clip_grad_norm", "ShapeError", "Tensor", "add", "as_tensor", "concat",
    "conv2d", "cross_entropy", "embedding_lookup", "exp", "layer_norm", "log", "log_softmax",
    "matmul", "max_pool2d", "mean", "mul", "neg", "no_grad", "relu", "reshape", "scale",
    "sigmoid", "slice_", "softmax", "sum_", "tanh", "transpose",
]
