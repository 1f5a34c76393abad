"""The building blocks: exactness of the scale symmetry contracts.

Each block promises a multiplier law; here we measure how exactly the
implementations keep those promises on random inputs. These deviations are
pure float rounding, not approximation: the architecture is equivariant by
construction, not by training.
"""

import numpy as np

from scalegmn.blocks import ReScaleEqNet, ScaleEqNet, ScaleInvNet
from scalegmn.tensor import Tensor

rng = np.random.default_rng(7)


def rel(a, b):
    return np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + 1e-9))


# Invariance: f(q1 x1, q2 x2) = f(x1, x2)
inv = ScaleInvNet([5, 4], 6, rng, mode="norm-divide")
x1, x2 = rng.standard_normal((3, 5)), rng.standard_normal((3, 4))
q1, q2 = 3.7, 0.2
print("scale_inv  invariance dev:",
      f"{rel(inv([Tensor(x1), Tensor(x2)]).data, inv([Tensor(q1 * x1), Tensor(q2 * x2)]).data):.2e}")

# Equivariance: slot i scales by its own q_i
eq = ScaleEqNet([5, 4], [6, 7], rng, mode="norm-divide")
base = eq([Tensor(x1), Tensor(x2)])
scaled = eq([Tensor(q1 * x1), Tensor(q2 * x2)])
print("scale_eq   slot-0 dev:", f"{rel(q1 * base[0].data, scaled[0].data):.2e}",
      " slot-1 dev:", f"{rel(q2 * base[1].data, scaled[1].data):.2e}")

# Rescale equivariance: the output carries the product of all multipliers —
# exactly the law a message function needs to cancel a neighbour's scale
# against its edge's inverse scale.
for variant in ("hadamard", "outer"):
    net = ReScaleEqNet([5, 4], 6, rng, variant=variant, mode="norm-divide")
    out = net([Tensor(x1), Tensor(x2)]).data
    out_scaled = net([Tensor(q1 * x1), Tensor(q2 * x2)]).data
    print(f"rescale_eq {variant:8s} product-law dev: {rel(q1 * q2 * out, out_scaled):.2e}")

# Sign symmetrization is bitwise exact: MLP(x) + MLP(-x) is the same float
# sum in either order.
sym = ScaleInvNet([5], 6, rng, mode="sign-symmetrize")
a = sym([Tensor(x1)]).data
b = sym([Tensor(-x1)]).data
print("sign symmetrization bitwise equal:", bool(np.array_equal(a, b)))
