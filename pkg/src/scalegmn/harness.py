"""Executable symmetry certification, task metrics, and the relay simulation.

Three kinds of evidence live here: orbit-based invariance/equivariance
reports for a metanetwork, function-preservation checks for datapoint
networks under orbit transforms, and a hand-wired (non-learned) message
passing run that reconstructs an input network's forward pass and the
gradients of its backward pass inside vertex representations.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .cnn import CnnParams, cnn_forward
from .ffnn import FfnnParams, apply_orbit, ffnn_forward
from .graph import build_graph, build_graph_cnn
from .tensor import ShapeError

SIM_EPS = 1e-12


# -- function preservation ------------------------------------------------------------

def check_function_preservation(net_a, net_b, grid: np.ndarray) -> float:
    """Max absolute output deviation between two same-architecture networks."""
    if isinstance(net_a, CnnParams):
        out_a, out_b = cnn_forward(net_a, grid), cnn_forward(net_b, grid)
    else:
        out_a, out_b = ffnn_forward(net_a, grid), ffnn_forward(net_b, grid)
    return float(np.max(np.abs(out_a - out_b)))


# -- certification reports ------------------------------------------------------------

@dataclass
class SymmetryReport:
    """Outcome of a randomized orbit certification run. Deterministic per seed."""

    name: str
    metric: str                    # "relative" or "absolute"
    tolerance: float
    seed: int
    deviations: list[float] = field(default_factory=list)
    config_hash: str = ""

    @property
    def trials(self) -> int:
        return len(self.deviations)

    @property
    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tolerance

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "metric": self.metric,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "trials": self.trials,
            "max_deviation": self.max_deviation,
            "passed": self.passed,
            "config_hash": self.config_hash,
            "deviations": self.deviations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def config_hash(config) -> str:
    blob = json.dumps(config.to_dict() if hasattr(config, "to_dict") else config,
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _graph_for(model, net):
    direction = model.config.direction
    if isinstance(net, CnnParams):
        return build_graph_cnn(net, direction=direction)
    return build_graph(net, direction=direction)


def _predict(model, net) -> np.ndarray:
    """Adapter: ScaleGMN-style models get a graph; plain callables get the net."""
    if hasattr(model, "forward") and hasattr(model, "config"):
        return model.forward([_graph_for(model, net)]).data[0]
    return np.asarray(model(net), dtype=np.float64).reshape(-1)


def _batched_predict(model, nets) -> np.ndarray:
    if hasattr(model, "forward") and hasattr(model, "config"):
        graphs = [_graph_for(model, n) for n in nets]
        return model.forward(graphs).data
    return np.stack([_predict(model, n) for n in nets])


def certify_invariance(model, net_sampler, orbit_sampler, trials: int = 50,
                       nets: int = 5, tol: float = 1e-8, seed: int = 0,
                       name: str = "invariance") -> SymmetryReport:
    """Relative readout deviation under random orbits of random networks.

    trials counts orbit elements per sampled network; trials=0 (or nets=0)
    yields a vacuous pass with zero recorded trials.
    """
    rng = np.random.default_rng(seed)
    report = SymmetryReport(name=name, metric="relative", tolerance=tol, seed=seed)
    if hasattr(model, "config"):
        report.config_hash = config_hash(model.config)
    for _ in range(nets):
        net = net_sampler(rng)
        base = _predict(model, net)
        batch = [apply_orbit_any(net, orbit_sampler(rng)) for _ in range(trials)]
        if not batch:
            continue
        outs = _batched_predict(model, batch)
        dev = np.abs(outs - base[None, :]) / (np.abs(base[None, :]) + 1e-9)
        report.deviations.extend(float(d) for d in dev.max(axis=1))
    return report


def apply_orbit_any(net, orbit):
    if isinstance(net, CnnParams):
        from .cnn import apply_orbit_cnn

        return apply_orbit_cnn(net, orbit)
    return apply_orbit(net, orbit)


def certify_equivariance(model, net_sampler, orbit_sampler, trials: int = 50,
                         nets: int = 5, tol: float = 1e-8, seed: int = 0,
                         name: str = "equivariance") -> SymmetryReport:
    """Entrywise sup-norm gap between edit(psi(theta)) and psi(edit(theta))."""
    rng = np.random.default_rng(seed)
    report = SymmetryReport(name=name, metric="absolute", tolerance=tol, seed=seed)
    if hasattr(model, "config"):
        report.config_hash = config_hash(model.config)
    edit = model.edit_params if hasattr(model, "edit_params") else model
    for _ in range(nets):
        net = net_sampler(rng)
        if hasattr(model, "edit_params"):
            base_edit = model.edit_params([_graph_for(model, net)], [net])[0]
        else:
            base_edit = edit(net)
        for _ in range(trials):
            orbit = orbit_sampler(rng)
            transformed = apply_orbit(net, orbit)
            if hasattr(model, "edit_params"):
                edited = model.edit_params([_graph_for(model, transformed)], [transformed])[0]
            else:
                edited = edit(transformed)
            expected = apply_orbit(base_edit, orbit)
            dev = 0.0
            for a, b in zip(edited.weights, expected.weights):
                dev = max(dev, float(np.max(np.abs(a - b))))
            for a, b in zip(edited.biases, expected.biases):
                dev = max(dev, float(np.max(np.abs(a - b))))
            report.deviations.append(dev)
    return report


# -- forward/backward relay simulation ---------------------------------------------------

@dataclass
class SimulationResult:
    """Channels recovered by the relay plus the full per-round history.

    history[t] is the [V, 5] state after t rounds with channels
    [bias, pre-activation, post-activation, 1/grad_pre, 1/grad_post].
    Gradients are stored inverted inside the run (the relay divides by
    them); extraction inverts once.
    """

    dims: list[int]
    history: list[np.ndarray]
    edge_history: list[np.ndarray]
    z: list[np.ndarray]
    x: list[np.ndarray]
    grad_z: list[np.ndarray]
    grad_x: list[np.ndarray]

    @property
    def rounds(self) -> int:
        return len(self.history) - 1


def _round_state(net, x0, out_grad):
    """Initial vertex state and the constant edge features of the relay."""
    dims = net.dims
    L = net.n_layers
    offsets = np.concatenate([[0], np.cumsum(dims)])
    V = int(offsets[-1])
    state = np.zeros((V, 5))
    # input vertices: bias channel 1, forward channels carry (z0, x0) = inputs
    state[: dims[0], 0] = 1.0
    state[: dims[0], 1] = x0
    state[: dims[0], 2] = x0
    for l, b in enumerate(net.biases):
        state[offsets[l + 1] : offsets[l + 2], 0] = b
    # output vertices: inverse gradients of the (optional) loss
    zs, h = [], np.asarray(x0, dtype=np.float64)
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = act.preact(h @ w.T, b)
        zs.append(z)
        h = act.fn(z)
    dzL = net.activations[-1].deriv(zs[-1]) * out_grad
    for name, vec in (("grad_z_L", dzL), ("grad_x_L", out_grad)):
        zero = np.where(np.abs(vec) < SIM_EPS)[0]
        if zero.size:
            raise ValueError(
                f"{name} is zero at output vertex {int(zero[0])}; "
                "the reciprocal relay channels need nonzero gradients"
            )
    state[offsets[L] :, 3] = 1.0 / dzL
    state[offsets[L] :, 4] = 1.0 / out_grad
    return state, offsets


def simulate_ffnn(net: FfnnParams, x0: np.ndarray, out_grad: np.ndarray,
                  rounds: int | None = None) -> SimulationResult:
    """Run the hand-wired relay: 2L rounds recover all channels.

    Forward messages relay post-activations through the stored weights;
    backward messages and updates apply elementwise reciprocals (g_m, g_U)
    to the inverted-gradient channels through reciprocal backward edges.
    After round l the layer-l vertices hold (z_l, x_l); after round 2L - l
    they hold the inverted gradients. Requires nonzero weights and nonzero
    intermediate gradients; zeros are reported with their vertex/edge.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    out_grad = np.asarray(out_grad, dtype=np.float64).reshape(-1)
    dims = net.dims
    L = net.n_layers
    if x0.shape[0] != dims[0] or out_grad.shape[0] != dims[-1]:
        raise ShapeError("input / output-gradient widths do not match the network")
    for l, w in enumerate(net.weights):
        zi, zj = np.where(np.abs(w) < SIM_EPS)
        if zi.size:
            raise ValueError(
                f"weight ({l + 1},{int(zi[0])},{int(zj[0])}) is zero; backward "
                "relay edges carry reciprocal weights"
            )
    rounds = 2 * L if rounds is None else rounds
    state, offsets = _round_state(net, x0, out_grad)
    history = [state.copy()]
    edge_history = [[w.copy() for w in net.weights]]
    omega = [
        (act.omega0 if act.name == "sine" else 1.0) for act in net.activations
    ]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for _ in range(rounds):
            prev = state
            state = prev.copy()
            # forward messages: sum_j x[j] * W(i, j), then z = omega * m + bias
            for l in range(1, L + 1):
                seg = slice(offsets[l], offsets[l + 1])
                prev_seg = slice(offsets[l - 1], offsets[l])
                m_fw = net.weights[l - 1] @ prev[prev_seg, 2]
                z = omega[l - 1] * m_fw + prev[seg, 0]
                act = net.activations[l - 1]
                state[seg, 1] = z
                state[seg, 2] = act.fn(z)
            # backward messages: g_U(sum_j g_m(invgz[j] * (1/W)(j, i)))
            for l in range(0, L):
                seg = slice(offsets[l], offsets[l + 1])
                nxt_seg = slice(offsets[l + 1], offsets[l + 2])
                g_m = _recip(prev[nxt_seg, 3][:, None] * _recip(net.weights[l]))
                m_bw = g_m.sum(axis=0)
                inv_gx = _recip(omega[l] * m_bw)
                if l == 0:
                    inv_gz = inv_gx  # identity pre-layer: grad_z0 = grad_x0
                else:
                    act = net.activations[l - 1]
                    inv_gz = inv_gx / act.deriv(prev[seg, 1])
                state[seg, 4] = inv_gx
                state[seg, 3] = inv_gz
            state[np.isnan(state)] = 0.0
            state[np.isinf(state)] = 0.0
            history.append(state.copy())
            edge_history.append([w.copy() for w in net.weights])
    # extraction: forward channels directly, gradient channels inverted once
    z_out, x_out, gz_out, gx_out = [], [], [], []
    final = history[-1]
    for l in range(1, L + 1):
        seg = slice(offsets[l], offsets[l + 1])
        z_out.append(final[seg, 1].copy())
        x_out.append(final[seg, 2].copy())
    for l in range(0, L + 1):
        seg = slice(offsets[l], offsets[l + 1])
        for channel, sink in ((3, gz_out), (4, gx_out)):
            vals = final[seg, channel]
            zero = np.where(np.abs(vals) < SIM_EPS)[0]
            if zero.size:
                raise ValueError(
                    f"gradient channel at layer {l}, vertex {int(zero[0])} is zero; "
                    "cannot invert the relay value"
                )
            sink.append(1.0 / vals)
    return SimulationResult(dims=list(dims), history=history, edge_history=edge_history,
                            z=z_out, x=x_out, grad_z=gz_out, grad_x=gx_out)


def _recip(a: np.ndarray) -> np.ndarray:
    """Reciprocal with zeros mapped to zero: transient relay channels only."""
    out = np.zeros_like(a)
    mask = np.abs(a) > 0
    out[mask] = 1.0 / a[mask]
    return out


# -- rank correlation ------------------------------------------------------------------

def kendall_tau(pred, true, variant: str = "b") -> float:
    """Concordant-minus-discordant pair statistic.

    variant "a" divides by n(n-1)/2 (no tie handling); variant "b" divides by
    sqrt((n0 - ties_pred)(n0 - ties_true)), the form used when labels can tie.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    true = np.asarray(true, dtype=np.float64).reshape(-1)
    n = pred.shape[0]
    if n != true.shape[0]:
        raise ShapeError("rankings must have equal length")
    if n < 2:
        raise ValueError("need at least two items to rank")
    iu = np.triu_indices(n, k=1)
    sp = np.sign(pred[:, None] - pred[None, :])[iu]
    st = np.sign(true[:, None] - true[None, :])[iu]
    num = float(np.sum(sp * st))
    n0 = n * (n - 1) / 2.0
    if variant == "a":
        return num / n0
    if variant == "b":
        ties_p = float(np.sum(sp == 0))
        ties_t = float(np.sum(st == 0))
        denom = np.sqrt((n0 - ties_p) * (n0 - ties_t))
        if denom == 0:
            return 0.0
        return num / denom
    raise ValueError(f"unknown kendall tau variant {variant!r}")
