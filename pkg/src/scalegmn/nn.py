"""Parameter containers and MLP plumbing on top of the tape engine."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class Module:
    """Minimal parameter container: children and named leaf tensors."""

    def _entries(self):
        for name, value in vars(self).items():
            yield name, value

    def named_parameters(self, prefix: str = ""):
        for name, value in self._entries():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{key}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{key}.{i}", item
            elif isinstance(value, dict):
                for k, item in value.items():
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{key}.{k}.")
                    elif isinstance(item, Tensor):
                        yield f"{key}.{k}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


class Linear(Module):
    """Affine map x @ W.T (+ b). `bias=False` gives the purely linear maps
    that scale-equivariant blocks require (a bias would break q-scaling).

    He-style uniform init (bound sqrt(6/d_in)): the deep message-passing
    stack contracts activations to nothing with narrower inits.
    """

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        bound = np.sqrt(6.0 / max(d_in, 1))
        self.weight = Tensor(rng.uniform(-bound, bound, size=(d_out, d_in)), name="weight")
        self.bias = Tensor(np.zeros(d_out), name="bias") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, T.transpose(self.weight))
        if self.bias is not None:
            y = T.add(y, self.bias)
        return y


class LayerNorm(Module):
    """Per-row normalization with learnable gain and shift."""

    def __init__(self, d: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(d), name="gain")
        self.shift = Tensor(np.zeros(d), name="shift")
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.mean_(x, axis=1, keepdims=True)
        centered = T.sub(x, mu)
        var = T.mean_(T.mul(centered, centered), axis=1, keepdims=True)
        normed = T.div(centered, T.sqrt(T.add(var, T.constant(self.eps))))
        return T.add(T.mul(normed, self.gain), self.shift)


_ACTS = {
    "silu": T.silu,
    "relu": T.relu,
    "tanh": T.tanh,
    "identity": lambda t: t,
}


class MLP(Module):
    """Stack of Linear layers, activation between layers, none after the last.

    `layer_norm=True` normalizes each hidden pre-activation; use it only
    where inputs carry no scaling symmetry (after canonicalization, or on
    input/output-vertex paths).
    """

    def __init__(self, dims, rng, act: str = "silu", bias: bool = True,
                 layer_norm: bool = False):
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output dims")
        self.layers = [Linear(dims[i], dims[i + 1], rng, bias=bias) for i in range(len(dims) - 1)]
        self.norms = (
            [LayerNorm(dims[i + 1]) for i in range(len(dims) - 2)] if layer_norm else []
        )
        self.act = act

    def __call__(self, x: Tensor) -> Tensor:
        fn = _ACTS[self.act]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                if self.norms:
                    x = self.norms[i](x)
                x = fn(x)
        return x


def mlp_forward(params, activation, x: Tensor | np.ndarray) -> Tensor:
    """Evaluate a plain MLP given per-layer (weight, bias) pairs.

    `activation` (an ActivationDescriptor or None) is applied after every
    layer except the last. `x` may be a single vector [d] or a batch [n, d].
    Running this with Tensor weights on a tape makes every intermediate
    differentiable.
    """
    x = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if x.ndim == 1:
        x = T.reshape(x, (1, x.shape[0]))
    n_layers = len(params)
    for i, (w, b) in enumerate(params):
        w = w if isinstance(w, Tensor) else Tensor(w)
        b = b if isinstance(b, Tensor) else Tensor(b)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} malformed")
        if x.shape[1] != w.shape[1]:
            raise ShapeError(
                f"layer {i}: input width {x.shape[1]} does not match weight {w.shape}"
            )
        x = T.add(T.matmul(x, T.transpose(w)), b)
        if activation is not None and i + 1 < n_layers:
            x = activation.apply(x)
    return x
