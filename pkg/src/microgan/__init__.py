"""A small deep convolutional GAN engine built on numpy."""

from .tensor import ConvSpec, Tensor, precision, set_default_dtype, tensor_new

__version__ = "0.1.0"

__all__ = ["ConvSpec", "Tensor", "precision", "set_default_dtype", "tensor_new"]
