"""Scale-equivariant graph metanetworks over neural network parameters."""

from . import activations, tensor
from .tensor import Tensor, backward, gradients

__all__ = ["Tensor", "backward", "gradients", "activations", "tensor"]
