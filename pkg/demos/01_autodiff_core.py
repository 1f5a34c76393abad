"""A tour of the numeric substrate: tensors, the tape, Adam, gradient checking.

Everything downstream (datapoint networks, the metanetwork, the certification
harness) runs on this little define-by-run engine, so it is worth seeing it
work on its own first.
"""

import numpy as np

from scalegmn import tensor as T
from scalegmn.optim import AdamState, finite_diff_check
from scalegmn.tensor import Tensor, gradients

# Build a computation and pull gradients back through it. The tape is
# recorded implicitly: every op remembers its parents.
x = Tensor([3.0])
loss = T.sum_(T.mul(x, x))  # x^2
(gx,) = gradients(loss, [x])
print(f"d(x^2)/dx at x=3: {gx[0]} (expected 6)")

# A two-layer MLP, gradient-checked against central differences.
rng = np.random.default_rng(0)
params = [
    Tensor(rng.standard_normal((8, 4)) * 0.4),
    Tensor(np.zeros(8)),
    Tensor(rng.standard_normal((1, 8)) * 0.4),
    Tensor(np.zeros(1)),
]
inputs = rng.standard_normal((16, 4))


def f(ps):
    h = T.tanh(T.add(T.matmul(Tensor(inputs), T.transpose(ps[0])), ps[1]))
    out = T.add(T.matmul(h, T.transpose(ps[2])), ps[3])
    return T.sum_(T.mul(out, out))


err = finite_diff_check(f, params, step=1e-6)
print(f"finite-difference check over {sum(p.size for p in params)} coordinates: "
      f"max relative error {err:.2e}")

# Adam drives a quadratic to its minimum.
p = Tensor([0.0])
opt = AdamState([p], lr=0.05)
for _ in range(2000):
    diff = T.sub(p, T.constant([5.0]))
    opt.step(gradients(T.sum_(T.mul(diff, diff)), [p]))
print(f"argmin of (x-5)^2 found by Adam: {p.data[0]:.4f}")
