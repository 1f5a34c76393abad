"""Command-line entry points: zoo synthesis, training, evaluation, certification.

Every command takes --config (JSON), --seed, and --out; each run is
deterministic under its seed. Reports are JSON, training metrics are CSV.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import activations
from .ffnn import FfnnParams, canonicalize_net, ffnn_forward_taped, sample_orbit, shift_sine_biases
from .graph import GraphTemplate, build_graph
from .harness import (
    SymmetryReport,
    certify_equivariance,
    certify_invariance,
    check_function_preservation,
    simulate_ffnn,
)
from .model import ScaleGMNConfig, ScaleGMNModel
from .tensor import Tensor, backward
from .train import ExperimentConfig, Runner
from .zoo import ZooEntry, gen_cnn_zoo, gen_inr_zoo, grid_coords, load_zoo, save_zoo
from . import tensor as T


def _load_config(path) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _out_dir(out) -> Path:
    path = Path(out) if out else Path("runs/out")
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- gen-zoo ----------------------------------------------------------------------------

def cmd_gen_zoo(config: dict, seed: int, out) -> int:
    kind = config.get("kind", "inr-2class")
    count = int(config.get("count", 50))
    out_dir = _out_dir(out)
    if kind == "inr-2class":
        entries = gen_inr_zoo(out_dir, count, seed, steps=int(config.get("steps", 2000)))
    elif kind == "cnn-accuracy":
        entries = gen_cnn_zoo(out_dir, count, seed)
    else:
        print(f"unknown zoo kind {kind!r}", file=sys.stderr)
        return 2
    print(f"gen-zoo: wrote {len(entries)} {kind} entries to {out_dir}")
    return 0


# -- train / eval --------------------------------------------------------------------------

def cmd_train(config: dict, seed: int, out) -> int:
    data = dict(config)
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["out_dir"] = str(out)
    cfg = ExperimentConfig(**data)
    runner = Runner(cfg)
    summary = runner.train()
    print(json.dumps(summary))
    return 0


def cmd_eval(config: dict, seed: int, out) -> int:
    ckpt = Path(config["checkpoint"])
    baseline = config.get("baseline", "none")
    model_overrides = {}
    manifest = ckpt / "checkpoint.json"
    if manifest.exists():
        model_overrides = json.loads(manifest.read_text(encoding="utf-8"))["config"]
        baseline = "none"
    cfg = ExperimentConfig(
        task=config["task"],
        zoo=config["zoo"],
        out_dir=str(_out_dir(out)),
        model=model_overrides,
        baseline=baseline,
        seed=int(config.get("split_seed", 0)),
        epochs=0,
    )
    runner = Runner(cfg)
    runner.load(ckpt)
    report = runner.eval_report(
        split=config.get("split", "test"),
        with_orbit_copy=bool(config.get("with_orbit_augmented_copy", False)),
        orbit_seed=seed if seed is not None else 1234,
    )
    out_path = _out_dir(out) / "eval_report.json"
    out_path.write_text(json.dumps(report, indent=1), encoding="utf-8")
    print(json.dumps(report))
    return 0


# -- certify -----------------------------------------------------------------------------

CERTIFY_COMBOS = (
    {"group_kind": "sign", "activation": "tanh", "direction": "forward"},
    {"group_kind": "sign", "activation": "tanh", "direction": "bidirectional"},
    {"group_kind": "sign", "activation": "sine", "direction": "forward"},
    {"group_kind": "sign", "activation": "sine", "direction": "bidirectional"},
    {"group_kind": "positive", "activation": "relu", "direction": "forward"},
    {"group_kind": "positive", "activation": "relu", "direction": "bidirectional"},
)


def _net_sampler(dims, act_name, kind):
    def sampler(rng):
        acts = [activations.by_name(act_name, 30.0)] * (len(dims) - 2) + [activations.identity()]
        weights, biases = [], []
        for i in range(len(dims) - 1):
            w = rng.standard_normal((dims[i + 1], dims[i]))
            if kind == "positive":
                w[np.abs(w) < 1e-3] = 1e-3  # keep reciprocal features conditioned
            weights.append(w)
            biases.append(rng.standard_normal(dims[i + 1]))
        return FfnnParams(weights, biases, acts)

    return sampler


def certify_model_combo(combo: dict, dims, trials: int, nets: int, tol: float,
                        seed: int, head: str = "invariant") -> SymmetryReport:
    kind = combo["group_kind"]
    direction = combo["direction"]
    sampler = _net_sampler(dims, combo["activation"], kind)
    rng = np.random.default_rng(seed)
    example = sampler(rng)
    template = GraphTemplate(build_graph(example, direction=direction))
    cfg = ScaleGMNConfig(
        d_v=16, d_e=16, d_msg=16, d_inv=8, d_readout=16, pe_dim=6, mlp_hidden=16,
        n_rounds=2, direction=direction, group_kind=kind, head=head,
        out_dim=3 if head == "invariant" else 1,
    )
    model = ScaleGMNModel(cfg, template, np.random.default_rng(seed + 1))
    widths = dims[1:-1]
    orbit = lambda rng_: sample_orbit(kind, list(widths), rng_)
    name = f"{combo['activation']}/{kind}/{direction}/{head}"
    if head == "invariant":
        return certify_invariance(model, sampler, orbit, trials=trials, nets=nets,
                                  tol=tol, seed=seed, name=name)
    return certify_equivariance(model, sampler, orbit, trials=trials, nets=nets,
                                tol=tol, seed=seed, name=name)


def cmd_certify(config: dict, seed: int, out) -> int:
    trials = int(config.get("trials", 50))
    nets = int(config.get("nets", 5))
    tol = float(config.get("tol", 1e-8))
    dims = tuple(config.get("dims", (2, 4, 4, 2)))
    seed = seed if seed is not None else 0
    combos = config.get("combos", CERTIFY_COMBOS)
    reports = []
    for combo in combos:
        for head in ("invariant", "equivariant-edit"):
            rep = certify_model_combo(dict(combo), dims, trials, nets, tol,
                                      seed, head=head)
            reports.append(rep)
            status = "pass" if rep.passed else "FAIL"
            print(f"certify {rep.name}: {status} "
                  f"(max deviation {rep.max_deviation:.3e}, {rep.trials} trials)")
    out_path = _out_dir(out) / "certify_report.json"
    out_path.write_text(
        json.dumps([r.to_dict() for r in reports], indent=1), encoding="utf-8"
    )
    return 0 if all(r.passed for r in reports) else 1


# -- canonicalize --------------------------------------------------------------------------

def cmd_canonicalize(config: dict, seed: int, out) -> int:
    entries, nets, meta = load_zoo(config["zoo"])
    orbit_canon = bool(config.get("orbit_canon", True))
    grid = grid_coords(int(config.get("grid_side", 16)))
    out_dir = _out_dir(out)
    new_entries, new_nets = [], []
    worst = 0.0
    for entry, net in zip(entries, nets):
        if entry.kind != "ffnn":
            new_entries.append(entry)
            new_nets.append(net)
            continue
        canon = shift_sine_biases(net)
        if orbit_canon:
            canon = canonicalize_net(canon)
        if grid.shape[1] == net.dims[0]:
            worst = max(worst, check_function_preservation(net, canon, grid))
        new_entries.append(entry)
        new_nets.append(canon)
    save_zoo(out_dir, new_entries, new_nets,
             {**meta, "canonicalized": True, "max_function_deviation": worst})
    print(f"canonicalize: {len(new_nets)} entries, max function deviation {worst:.3e}")
    return 0 if worst < float(config.get("tol", 1e-6)) else 1


# -- simulate ---------------------------------------------------------------------------

def cmd_simulate(config: dict, seed: int, out) -> int:
    count = int(config.get("count", 10))
    dims = tuple(config.get("dims", (2, 6, 6, 1)))
    act_name = config.get("activation", "sine")
    tol_fw = float(config.get("tol_forward", 1e-9))
    tol_bw = float(config.get("tol_backward", 1e-6))
    rng = np.random.default_rng(seed if seed is not None else 0)
    sampler = _net_sampler(dims, act_name, "sign")
    max_fw = max_bw = 0.0
    for _ in range(count):
        if act_name == "sine":
            from .zoo import siren_init

            net = siren_init(dims, 30.0, rng)
            for b in net.biases:
                b += rng.uniform(-0.5, 0.5, size=b.shape)
        else:
            net = sampler(rng)
            net.weights = [w * 0.7 for w in net.weights]
        x0 = rng.uniform(-1, 1, size=dims[0])
        g = rng.uniform(0.5, 1.5, size=dims[-1])
        res = simulate_ffnn(net, x0, g)
        collect = []
        out_t = ffnn_forward_taped(net, x0[None, :], collect=collect)
        backward(T.sum_(T.mul(out_t, T.constant(g[None, :]))))
        for l, (z_t, x_t) in enumerate(collect, start=1):
            z_direct = z_t.data[0]
            x_direct = np.atleast_2d(net.activations[l - 1].fn(z_direct))[0]
            max_fw = max(max_fw, float(np.max(np.abs(res.z[l - 1] - z_direct))))
            max_fw = max(max_fw, float(np.max(np.abs(res.x[l - 1] - x_direct))))
            gz = z_t.grad[0]
            max_bw = max(
                max_bw,
                float(np.max(np.abs(res.grad_z[l] - gz) / np.maximum(np.abs(gz), 1e-12))),
            )
    report = {
        "count": count,
        "dims": list(dims),
        "activation": act_name,
        "max_forward_deviation": max_fw,
        "max_backward_rel_deviation": max_bw,
        "tol_forward": tol_fw,
        "tol_backward": tol_bw,
        "passed": max_fw < tol_fw and max_bw < tol_bw,
    }
    (_out_dir(out) / "simulate_report.json").write_text(
        json.dumps(report, indent=1), encoding="utf-8"
    )
    print(
        f"simulate: max forward deviation {max_fw:.3e}, "
        f"max backward relative deviation {max_bw:.3e}"
    )
    return 0 if report["passed"] else 1


# -- entry point ----------------------------------------------------------------------------

COMMANDS = {
    "gen-zoo": cmd_gen_zoo,
    "train": cmd_train,
    "eval": cmd_eval,
    "certify": cmd_certify,
    "canonicalize": cmd_canonicalize,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="scalegmn",
        description="Scale-equivariant graph metanetworks: zoos, training, certification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)
    config = _load_config(args.config)
    return COMMANDS[args.command](config, args.seed, args.out)


if __name__ == "__main__":
    sys.exit(main())
