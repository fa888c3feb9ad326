"""Numerical substrate: tensors, autodiff tape, kernels, optimizer, oracles."""

from . import kernels, ops
from .fdcheck import finite_difference_gradient, max_gradient_error, relative_error
from .optim import AdamState, adam_step, clip_gradients
from .random import stream, stream_key
from .tensor import (
    GradientMap,
    Tensor,
    backward,
    constant,
    default_dtype,
    gaussian,
    grad_enabled,
    no_grad,
    record_op,
    set_default_dtype,
    using_dtype,
    zeros,
)

__all__ = [
    "AdamState",
    "GradientMap",
    "Tensor",
    "adam_step",
    "backward",
    "clip_gradients",
    "constant",
    "default_dtype",
    "finite_difference_gradient",
    "gaussian",
    "grad_enabled",
    "kernels",
    "max_gradient_error",
    "no_grad",
    "ops",
    "record_op",
    "relative_error",
    "set_default_dtype",
    "stream",
    "stream_key",
    "using_dtype",
    "zeros",
]
