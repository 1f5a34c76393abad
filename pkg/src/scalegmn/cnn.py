"""Small convolutional classifiers: evaluation and channel-scaling orbits.

Architecture handled here: a stack of valid (no padding) convolutions with a
pointwise activation, global average pooling, then one linear head. Channel
permutations and per-channel scalings of hidden conv layers preserve the
computed function exactly like hidden-neuron transforms do for FFNNs; the
head columns absorb the inverse because pooling is linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .activations import KIND_POSITIVE, KIND_SIGN, ActivationDescriptor
from .ffnn import OrbitElement
from .tensor import ShapeError, Tensor


@dataclass
class CnnParams:
    """Per-conv-layer kernels [out, in, kh, kw] and biases, plus the linear head."""

    kernels: list[np.ndarray]
    conv_biases: list[np.ndarray]
    activations: list[ActivationDescriptor]
    head_weight: np.ndarray  # [n_classes, last_channels]
    head_bias: np.ndarray

    def __post_init__(self):
        if not (len(self.kernels) == len(self.conv_biases) == len(self.activations)):
            raise ShapeError("conv layer lists must align")
        for i, (k, b) in enumerate(zip(self.kernels, self.conv_biases)):
            if k.ndim != 4 or b.ndim != 1 or k.shape[0] != b.shape[0]:
                raise ShapeError(f"conv layer {i}: kernel {k.shape} / bias {b.shape} malformed")
            if i > 0 and k.shape[1] != self.kernels[i - 1].shape[0]:
                raise ShapeError(f"conv layer {i}: channel chain broken")
        if self.head_weight.shape[1] != self.kernels[-1].shape[0]:
            raise ShapeError("head width does not match last conv channels")

    @property
    def channels(self) -> list[int]:
        return [self.kernels[0].shape[1]] + [k.shape[0] for k in self.kernels]

    @property
    def kernel_hw(self) -> tuple[int, int]:
        return self.kernels[0].shape[2], self.kernels[0].shape[3]

    def copy(self) -> "CnnParams":
        return CnnParams(
            [k.copy() for k in self.kernels],
            [b.copy() for b in self.conv_biases],
            list(self.activations),
            self.head_weight.copy(),
            self.head_bias.copy(),
        )

    def flatten(self) -> np.ndarray:
        parts = []
        for k, b in zip(self.kernels, self.conv_biases):
            parts.append(k.reshape(-1))
            parts.append(b)
        parts.append(self.head_weight.reshape(-1))
        parts.append(self.head_bias)
        return np.concatenate(parts)


def _conv_valid(x: np.ndarray, k: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x [n, c_in, H, W] * k [c_out, c_in, kh, kw] -> [n, c_out, H', W']."""
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = k.shape
    ho, wo = h - kh + 1, w - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    out = np.zeros((n, c_out, ho, wo))
    for dr in range(kh):
        for dc in range(kw):
            patch = x[:, :, dr : dr + ho, dc : dc + wo]
            out += np.einsum("nchw,oc->nohw", patch, k[:, :, dr, dc])
    return out + b[None, :, None, None]


def cnn_forward(net: CnnParams, image: np.ndarray) -> np.ndarray:
    """Logits for image(s) of shape [c, H, W] or [n, c, H, W]."""
    x = np.asarray(image, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != net.channels[0]:
        raise ShapeError(f"image shape {x.shape} does not match {net.channels[0]} input channels")
    for k, b, act in zip(net.kernels, net.conv_biases, net.activations):
        x = act.fn(_conv_valid(x, k, b))
    pooled = x.mean(axis=(2, 3))
    logits = pooled @ net.head_weight.T + net.head_bias
    return logits[0] if single else logits


def cnn_forward_taped(kernels, conv_biases, activations, head_w, head_b,
                      images: np.ndarray) -> Tensor:
    """Differentiable forward over Tensor parameters; images are constants.

    Images arrive as [n, c, H, W]; internally channels-last so the kernel
    contraction is a plain 2-D matmul per kernel offset.
    """
    x_np = np.transpose(np.asarray(images, dtype=np.float64), (0, 2, 3, 1))
    x = Tensor(x_np)
    for k, b, act in zip(kernels, conv_biases, activations):
        c_out, c_in, kh, kw = k.shape
        n, h, w, _ = x.shape
        ho, wo = h - kh + 1, w - kw + 1
        acc = None
        for dr in range(kh):
            for dc in range(kw):
                patch = T.narrow(T.narrow(x, 1, dr, ho), 2, dc, wo)
                flat = T.reshape(patch, (n * ho * wo, c_in))
                k_slice = T.reshape(
                    T.narrow(T.narrow(k, 2, dr, 1), 3, dc, 1), (c_out, c_in)
                )
                term = T.matmul(flat, T.transpose(k_slice))
                acc = term if acc is None else T.add(acc, term)
        acc = T.add(acc, b)
        x = act.apply(T.reshape(acc, (n, ho, wo, c_out)))
    n, h, w, c = x.shape
    pooled = T.mean_(T.reshape(x, (n, h * w, c)), axis=1)
    return T.add(T.matmul(pooled, T.transpose(head_w)), head_b)


def apply_orbit_cnn(net: CnnParams, g: OrbitElement) -> CnnParams:
    """Scale/permute hidden conv channels; the head columns absorb inverses."""
    widths = net.channels[1:]
    if [len(p) for p in g.perms] != widths:
        raise ShapeError(f"orbit widths {[len(p) for p in g.perms]} != conv channels {widths}")
    for l, (q, act) in enumerate(zip(g.scales, net.activations)):
        if act.kind == KIND_POSITIVE:
            ok = bool(np.all(q > 0))
        elif act.kind == KIND_SIGN:
            ok = bool(np.all(np.isin(q, (-1.0, 1.0))))
        else:
            ok = bool(np.all(q == 1.0))
        if not ok:
            raise ValueError(f"conv layer {l}: multiplier outside the {act.name} scaling group")
    out = net.copy()
    for l in range(len(out.kernels)):
        q, p = g.scales[l], g.perms[l]
        inv = np.argsort(p)
        k = q[:, None, None, None] * out.kernels[l]
        b = q * out.conv_biases[l]
        if l > 0:
            q_prev, p_prev = g.scales[l - 1], g.perms[l - 1]
            inv_prev = np.argsort(p_prev)
            k = (k / q_prev[None, :, None, None])[:, inv_prev]
        out.kernels[l] = k[inv]
        out.conv_biases[l] = b[inv]
    q_last, p_last = g.scales[-1], g.perms[-1]
    inv_last = np.argsort(p_last)
    out.head_weight = (out.head_weight / q_last[None, :])[:, inv_last]
    return out
