"""Adam optimizer and the finite-difference gradient checker."""

from __future__ import annotations

import numpy as np

from .tensor import NumericsError, ShapeError, Tensor, gradients


class AdamState:
    """Per-parameter first/second moment accumulators plus the step counter."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]

    def step(self, grads) -> None:
        adam_step(self, self.params, grads)


def adam_step(state: AdamState, params, grads) -> list[Tensor]:
    """Standard Adam update with bias correction; rebinds each param's data.

    Fails fast on non-finite gradients so a diverging run stops at the first
    bad step instead of poisoning the moments.
    """
    params = list(params)
    if len(params) != len(state.m):
        raise ShapeError("param list does not match optimizer state")
    grads = [np.asarray(g, dtype=np.float64) for g in grads]
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"grad {i} shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient for parameter {i}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.assign(p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return params


def finite_diff_check(f, params, step: float = 1e-6, rel_floor: float = 1e-6) -> float:
    """Max relative error between autodiff and central differences.

    `f` maps the given parameter tensors to a scalar Tensor. Every coordinate
    of every parameter is perturbed by ±step. The per-coordinate denominator
    is max(|ad|, |fd|, floor) with floor = max(rel_floor, 1e-3 * gmax), gmax
    the largest autodiff gradient entry: central differences in float64
    cannot resolve deviations far below the gradient's own scale, so
    near-zero coordinates are compared at that scale instead of blowing up.
    """
    params = list(params)
    loss = f(params)
    ad = gradients(loss, params)
    gmax = max((float(np.max(np.abs(g))) for g in ad), default=0.0)
    floor = max(rel_floor, 1e-3 * gmax)
    worst = 0.0
    for p, g in zip(params, ad):
        base = p.data.copy()
        flat = base.reshape(-1)
        g_flat = np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            p.assign(base.reshape(p.shape))
            hi = float(f(params).data.reshape(-1)[0])
            flat[k] = orig - step
            p.assign(base.reshape(p.shape))
            lo = float(f(params).data.reshape(-1)[0])
            flat[k] = orig
            p.assign(base.reshape(p.shape))
            fd = (hi - lo) / (2.0 * step)
            denom = max(abs(g_flat[k]), abs(fd), floor)
            worst = max(worst, abs(g_flat[k] - fd) / denom)
    return worst
