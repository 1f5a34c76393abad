"""Datapoint feedforward networks: evaluation, symmetry orbits, canonicalization.

These are the networks the metanetwork consumes. An orbit element is a
per-hidden-layer (permutation, diagonal multiplier) pair; applying it to the
parameters leaves the represented function unchanged, which is the property
every symmetry test downstream certifies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from . import tensor as T
from .activations import (
    KIND_NONE,
    KIND_POSITIVE,
    KIND_SIGN,
    ActivationDescriptor,
    identity,
)
from .nn import mlp_forward
from .tensor import ShapeError, Tensor

MIN_SCALE = 1e-6  # sampled positive multipliers are resampled below this


@dataclass
class FfnnParams:
    """Per-layer (weight, bias, activation); weights[i] maps layer i to i+1."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[ActivationDescriptor]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("layer lists must have equal length")
        if len(self.weights) < 1:
            raise ShapeError("need at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} malformed")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i}: input width breaks the chain")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "FfnnParams":
        return FfnnParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )

    def flatten(self) -> np.ndarray:
        """All parameters as one vector: W1 (row-major), b1, ..., WL, bL."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)


def ffnn_forward(net: FfnnParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on inputs x of shape [d0] or [n, d0]."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != net.dims[0]:
        raise ShapeError(f"input width {h.shape[1]} != network input dim {net.dims[0]}")
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = act.preact(h @ w.T, b)
        h = act.fn(z)
    return h[0] if np.asarray(x).ndim == 1 else h


def ffnn_forward_taped(net, x: np.ndarray, collect=None):
    """Tape-recorded forward with Tensor parameters; returns the output Tensor.

    `net` may hold Tensors or raw arrays (lifted to leaves). When `collect`
    is a list, the per-layer (pre-activation, post-activation) tensors are
    appended to it so their gradients can be read after a backward sweep.
    """
    h = Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    for w, b, act in zip(net.weights, net.biases, net.activations):
        wt = w if isinstance(w, Tensor) else Tensor(w)
        bt = b if isinstance(b, Tensor) else Tensor(b)
        z = act.preact_t(T.matmul(h, T.transpose(wt)), bt)
        h = act.apply(z)
        if collect is not None:
            collect.append((z, h))
    return h


@dataclass
class OrbitElement:
    """One (P_l, Q_l) choice per hidden layer; identity is forced at the ends.

    `perms[l][i]` is the new position of old neuron i in hidden layer l+1;
    `scales[l][i]` is the multiplier q applied to old neuron i.
    """

    perms: list[np.ndarray]
    scales: list[np.ndarray]
    kind: str = KIND_SIGN

    def __post_init__(self):
        for p, q in zip(self.perms, self.scales):
            if sorted(p.tolist()) != list(range(len(p))):
                raise ValueError("perm is not a bijection")
            if len(p) != len(q):
                raise ShapeError("perm/scale length mismatch")
            if self.kind == KIND_POSITIVE and np.any(q <= 0):
                raise ValueError("positive-kind multiplier not > 0")
            if self.kind == KIND_SIGN and np.any(np.abs(np.abs(q) - 1.0) > 0):
                raise ValueError("sign-kind multiplier not in {-1, 1}")
            if self.kind == KIND_NONE and np.any(q != 1.0):
                raise ValueError("none-kind multiplier must be 1")

    @staticmethod
    def identity_for(widths: list[int], kind: str = KIND_SIGN) -> "OrbitElement":
        return OrbitElement(
            [np.arange(w) for w in widths], [np.ones(w) for w in widths], kind
        )

    def compose(self, first: "OrbitElement") -> "OrbitElement":
        """The single element equal to applying `first` then self."""
        perms, scales = [], []
        for p2, q2, p1, q1 in zip(self.perms, self.scales, first.perms, first.scales):
            perms.append(p2[p1])
            scales.append(q2[p1] * q1)
        return OrbitElement(perms, scales, self.kind)


def apply_orbit(net: FfnnParams, g: OrbitElement) -> FfnnParams:
    """Transform parameters by the orbit element; the function is preserved.

    New row i of layer l gets old row inv(i) scaled by q; columns are divided
    by the previous layer's multipliers. Input and output neurons stay fixed.
    """
    hidden = net.dims[1:-1]
    if [len(p) for p in g.perms] != hidden:
        raise ShapeError(f"orbit widths {[len(p) for p in g.perms]} != hidden dims {hidden}")
    for l, (q, act) in enumerate(zip(g.scales, net.activations[:-1])):
        if act.kind == KIND_POSITIVE:
            ok = bool(np.all(q > 0))
        elif act.kind == KIND_SIGN:
            ok = bool(np.all(np.isin(q, (-1.0, 1.0))))
        else:
            ok = bool(np.all(q == 1.0))
        if not ok:
            raise ValueError(
                f"hidden layer {l}: multiplier outside the {act.name} scaling group"
            )
    out = net.copy()
    n_hidden = len(hidden)
    for l in range(net.n_layers):
        w, b = out.weights[l], out.biases[l]
        if l < n_hidden:  # rows of layer l+1 are hidden: scale + permute rows
            q, p = g.scales[l], g.perms[l]
            inv = np.argsort(p)
            w = (q[:, None] * w)[inv]
            b = (q * b)[inv]
        if l > 0:  # columns follow the previous hidden layer
            q_prev, p_prev = g.scales[l - 1], g.perms[l - 1]
            inv_prev = np.argsort(p_prev)
            w = (w / q_prev[None, :])[:, inv_prev]
        out.weights[l], out.biases[l] = w, b
    return out


def sample_orbit(kind: str, widths: list[int], rng: np.random.Generator,
                 lam: float = 1.0, permute: bool = True) -> OrbitElement:
    """Random orbit element: sign entries are fair coin flips, positive entries
    are Exponential(rate=lam) resampled away from zero; permutations uniform."""
    perms, scales = [], []
    for w in widths:
        perms.append(rng.permutation(w) if permute else np.arange(w))
        if kind == KIND_SIGN:
            scales.append(rng.choice([-1.0, 1.0], size=w))
        elif kind == KIND_POSITIVE:
            if lam <= 0:
                raise ValueError("lam must be > 0 for positive scaling")
            q = rng.exponential(scale=1.0 / lam, size=w)
            while np.any(q < MIN_SCALE):
                bad = q < MIN_SCALE
                q[bad] = rng.exponential(scale=1.0 / lam, size=int(bad.sum()))
            scales.append(q)
        elif kind == KIND_NONE:
            scales.append(np.ones(w))
        else:
            raise ValueError(f"unknown group kind {kind!r}")
    return OrbitElement(perms, scales, kind)


def bias_shift(b: float, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Canonicalize the phase of one sine neuron sin(omega0 * w.x + b).

    Returns (b', w') with sin(omega0 * w'.x + b') identical to the original
    for all x and b' in (-pi/2, pi/2] up to the single boundary point -pi/2
    (reached only when the accumulated sign is -1 and the reduced phase is
    exactly pi/2). Idempotent.
    """
    w = np.asarray(w, dtype=np.float64)
    s = 1.0
    if b < 0:
        b, w, s = -b, -w, -s
    if b > 2 * math.pi:
        b = math.fmod(b, 2 * math.pi)
    if math.pi < b <= 2 * math.pi:
        b -= math.pi
        s = -s
    if b > math.pi / 2:
        b -= math.pi
        s = -s
    return s * b, s * w


def shift_sine_biases(net: FfnnParams) -> FfnnParams:
    """Apply bias_shift to every hidden sine neuron; other layers untouched."""
    out = net.copy()
    for l in range(net.n_layers - 1):
        if net.activations[l].name != "sine":
            continue
        for i in range(out.biases[l].shape[0]):
            b2, w2 = bias_shift(out.biases[l][i], out.weights[l][i])
            out.biases[l][i] = b2
            out.weights[l][i] = w2
    return out


def canonicalize_net(net: FfnnParams) -> FfnnParams:
    """Map the net to a canonical representative of its scaling orbit.

    Positive-scale layers divide each hidden neuron's incoming (row, bias) by
    its norm; sign layers flip so the largest-magnitude incoming entry is
    positive. Outgoing weights absorb the inverse. Layers are processed from
    the input side so each step sees already-canonical columns.
    """
    out = net.copy()
    for l in range(net.n_layers - 1):
        act = net.activations[l]
        row_block = np.concatenate([out.weights[l], out.biases[l][:, None]], axis=1)
        if act.kind == KIND_POSITIVE:
            norms = np.linalg.norm(row_block, axis=1)
            q = np.where(norms > MIN_SCALE, 1.0 / np.maximum(norms, MIN_SCALE), 1.0)
        elif act.kind == KIND_SIGN:
            lead = row_block[np.arange(row_block.shape[0]), np.argmax(np.abs(row_block), axis=1)]
            q = np.where(lead < 0, -1.0, 1.0)
        else:
            continue
        out.weights[l] = q[:, None] * out.weights[l]
        out.biases[l] = q * out.biases[l]
        out.weights[l + 1] = out.weights[l + 1] / q[None, :]
    return out


def stat_features(net) -> np.ndarray:
    """Per-layer summary statistics of weights and biases, fixed order.

    Seven statistics (mean, std, min, max, quartiles) for the weights then
    the biases of each layer: 7 * 2 * L entries. Invariant to hidden-neuron
    permutations by construction.
    """
    feats = []
    for w, b in zip(net.weights, net.biases):
        for arr in (np.asarray(w).reshape(-1), np.asarray(b).reshape(-1)):
            q25, q50, q75 = np.percentile(arr, [25, 50, 75])
            feats.extend([arr.mean(), arr.std(), arr.min(), arr.max(), q25, q50, q75])
    return np.asarray(feats)
