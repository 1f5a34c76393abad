"""Non-equivariant reference models: the negative controls.

Both baselines read a fixed feature vector off the input network and run a
plain MLP. Neither respects scaling symmetries; orbit-transformed copies of
a test set are expected to degrade them, which is exactly what the
comparison reports measure.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .ffnn import stat_features
from .nn import MLP, Module
from .tensor import Tensor


def flat_features(net) -> np.ndarray:
    return net.flatten()


class VectorMlpBaseline(Module):
    """MLP over per-network feature vectors (flattened params or statistics)."""

    def __init__(self, feature_fn, d_in: int, d_out: int, rng, hidden: int = 64):
        self.feature_fn = feature_fn
        self.mlp = MLP([d_in, hidden, hidden, d_out], rng)
        self.d_in = d_in
        self.d_out = d_out

    def features(self, nets) -> np.ndarray:
        return np.stack([self.feature_fn(n) for n in nets])

    def forward(self, nets) -> Tensor:
        return self.mlp(Tensor(self.features(nets)))

    def __call__(self, net) -> np.ndarray:
        return self.forward([net]).data[0]


def make_flat_baseline(example_net, d_out: int, rng, hidden: int = 64) -> VectorMlpBaseline:
    return VectorMlpBaseline(flat_features, flat_features(example_net).size, d_out,
                             rng, hidden=hidden)


def make_stat_baseline(example_net, d_out: int, rng, hidden: int = 64) -> VectorMlpBaseline:
    return VectorMlpBaseline(stat_features, stat_features(example_net).size, d_out,
                             rng, hidden=hidden)
