"""Minimal dense-tensor engine with reverse-mode differentiation."""

from . import functional
from .nn import BatchNorm2d, Conv2d, ConvBNReLU, Module
from .tensor import DTYPE, NonFiniteError, Tensor, backward, parameter, set_debug

__all__ = [
    "DTYPE",
    "BatchNorm2d",
    "Conv2d",
    "ConvBNReLU",
    "Module",
    "NonFiniteError",
    "Tensor",
    "backward",
    "functional",
    "parameter",
    "set_debug",
]
