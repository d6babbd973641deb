"""Reverse-mode differentiation on numpy arrays."""
from . import ops
from .gradcheck import grad_check
from .ops import (
    avg_pool,
    batch_norm,
    conv1d,
    conv2d,
    depthwise_conv2d,
    dropout,
    elu,
    flatten,
    grad_reverse,
    linear,
    max_pool,
    pool,
    separable_conv2d,
    softmax,
    softmax_cross_entropy,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Node, Tape, Tensor, active_tape, backward

__all__ = [
    "Adam", "AdamState", "Node", "Tape", "Tensor", "active_tape", "adam_step", "avg_pool", "backward",
    "batch_norm", "conv1d", "conv2d", "depthwise_conv2d", "dropout", "elu", "flatten", "grad_check",
    "grad_reverse", "linear", "max_pool", "ops", "pool", "separable_conv2d", "softmax",
    "softmax_cross_entropy",
]
