"""Pointwise activations with their scaling groups and canonicalization modes.

Each descriptor records the 1-D multiplier group of its nonlinearity: the
scalars a with sigma(a*x) = phi1(a) * sigma(x). ReLU admits every a > 0,
tanh and sine admit {-1, +1}, the identity head admits none that we exploit.
phi1 is the identity map on every in-scope group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

# Multiplier group kinds and the default canonicalization used to quotient them.
KIND_POSITIVE = "positive"
KIND_SIGN = "sign"
KIND_NONE = "none"

_DEFAULT_CANON = {
    KIND_POSITIVE: "norm-divide",
    KIND_SIGN: "sign-symmetrize",
    KIND_NONE: "identity",
}


@dataclass(frozen=True)
class ActivationDescriptor:
    """A pointwise nonlinearity plus the symmetry data attached to it.

    For sine layers the layer map is sin(omega0 * W x + b): the frequency
    multiplies only the linear term, so the bias is directly the phase that
    the bias-shift canonicalization constrains to (-pi/2, pi/2].
    """

    name: str
    kind: str
    omega0: float = 0.0
    canon_mode: str = field(default="")

    def __post_init__(self):
        if self.name == "sine":
            k = self.omega0 / math.pi
            if abs(k - round(k)) < 1e-9:
                raise ValueError("sine frequency must not be an integer multiple of pi")
        if not self.canon_mode:
            object.__setattr__(self, "canon_mode", _DEFAULT_CANON[self.kind])

    # Pre-activation: the argument handed to the pointwise nonlinearity.
    def preact(self, lin: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.name == "sine":
            return self.omega0 * lin + b
        return lin + b

    def preact_t(self, lin: Tensor, b: Tensor) -> Tensor:
        if self.name == "sine":
            return T.add(T.mul(lin, T.constant(self.omega0)), b)
        return T.add(lin, b)

    def fn(self, z: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            return np.maximum(z, 0.0)
        if self.name == "tanh":
            return np.tanh(z)
        if self.name == "sine":
            return np.sin(z)
        return z

    def deriv(self, z: np.ndarray) -> np.ndarray:
        if self.name == "relu":
            return (z > 0).astype(np.float64)
        if self.name == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        if self.name == "sine":
            return np.cos(z)
        return np.ones_like(z)

    def apply(self, z: Tensor) -> Tensor:
        if self.name == "relu":
            return T.relu(z)
        if self.name == "tanh":
            return T.tanh(z)
        if self.name == "sine":
            return T.sin(z)
        return z

    def phi1(self, a: float) -> float:
        """Output multiplier matched to input multiplier a (identity in scope)."""
        return a

    def valid_multiplier(self, a: float) -> bool:
        if self.kind == KIND_POSITIVE:
            return a > 0.0
        if self.kind == KIND_SIGN:
            return a in (-1.0, 1.0)
        return a == 1.0


def relu() -> ActivationDescriptor:
    return ActivationDescriptor("relu", KIND_POSITIVE)


def tanh_act() -> ActivationDescriptor:
    return ActivationDescriptor("tanh", KIND_SIGN)


def sine(omega0: float = 30.0) -> ActivationDescriptor:
    return ActivationDescriptor("sine", KIND_SIGN, omega0=omega0)


def identity() -> ActivationDescriptor:
    return ActivationDescriptor("identity", KIND_NONE)


def by_name(name: str, omega0: float = 30.0) -> ActivationDescriptor:
    if name == "relu":
        return relu()
    if name == "tanh":
        return tanh_act()
    if name == "sine":
        return sine(omega0)
    if name == "identity":
        return identity()
    raise ValueError(f"unknown activation {name!r}")
