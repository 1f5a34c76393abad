"""Task training/evaluation loops for the three desk-scale experiments.

Tasks: 2-class INR classification (invariant head, cross-entropy),
CNN generalization prediction (invariant head, MSE on held-out accuracy,
scored by Kendall tau-b), and INR editing (equivariant head, functional MSE
against dilated source signals on the signal grid).

Every run is deterministic under its seed; metrics stream to a CSV with
header epoch,split,metric,value and the best-validation checkpoint is kept.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .baselines import make_flat_baseline, make_stat_baseline
from .cnn import CnnParams
from .ffnn import FfnnParams, ffnn_forward_taped, sample_orbit
from .graph import GraphTemplate, build_graph, build_graph_cnn
from .harness import apply_orbit_any, kendall_tau
from .model import ScaleGMNConfig, ScaleGMNModel, save_checkpoint
from .optim import AdamState
from .tensor import NumericsError, Tensor, gradients
from .zoo import dilate3x3, grid_coords, inr_source_image, load_zoo

TASKS = ("inr-classify", "cnn-generalization", "inr-edit")


@dataclass
class ExperimentConfig:
    task: str
    zoo: str
    out_dir: str = "runs/default"
    model: dict = field(default_factory=dict)      # ScaleGMNConfig overrides
    baseline: str = "none"                          # none | flat-mlp | stat-mlp
    lr: float = 2e-3
    weight_decay: float = 0.0
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    augmentation: str = "none"                      # none | sign | positive
    augmentation_lam: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        head = self.model.get("head", "invariant")
        if self.task == "inr-edit" and head != "equivariant-edit":
            self.model["head"] = "equivariant-edit"
        if self.task != "inr-edit" and head == "equivariant-edit":
            raise ValueError("equivariant-edit head requires the inr-edit task")
        if self.task == "inr-edit" and self.baseline != "none":
            raise ValueError("baselines do not implement the editing head")

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return ExperimentConfig(**data)


def split_indices(n: int, seed: int) -> dict[str, np.ndarray]:
    """Disjoint 70/15/15 split covering all n items, by seeded shuffle."""
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(0.70 * n))
    n_val = int(round(0.15 * n))
    return {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }


def _group_kind_of(nets) -> str:
    acts = nets[0].activations
    kinds = {a.kind for a in acts[:-1]} or {"none"}
    return next(iter(kinds)) if len(kinds) == 1 else "mixed"


def _hidden_widths(net) -> list[int]:
    if isinstance(net, CnnParams):
        return net.channels[1:]
    return net.dims[1:-1]


class TaskData:
    """A loaded zoo with graphs, labels, and split indices."""

    def __init__(self, zoo_path, seed: int, direction: str):
        self.entries, self.nets, self.meta = load_zoo(zoo_path)
        if not self.nets:
            raise ValueError(f"zoo at {zoo_path} is empty")
        self.kind = self.entries[0].kind
        self.labels = np.array([e.label for e in self.entries])
        self.graphs = [self._build(n, direction) for n in self.nets]
        self.template = GraphTemplate(self.graphs[0])
        self.splits = split_indices(len(self.nets), seed)
        self.group_kind = _group_kind_of(self.nets)

    def _build(self, net, direction):
        if isinstance(net, CnnParams):
            return build_graph_cnn(net, direction=direction)
        return build_graph(net, direction=direction)

    def orbit_copy(self, idx, seed: int, direction: str):
        """Orbit-transformed copies of the indexed nets (fresh graphs)."""
        rng = np.random.default_rng(seed)
        nets, graphs = [], []
        for i in idx:
            net = self.nets[i]
            orbit = sample_orbit(self.group_kind, _hidden_widths(net), rng)
            t = apply_orbit_any(net, orbit)
            nets.append(t)
            graphs.append(self._build(t, direction))
        return nets, graphs


# -- losses and metrics -----------------------------------------------------------------

def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    shift = T.constant(logits.data.max(axis=1, keepdims=True))
    z = T.sub(logits, shift)
    lse = T.log(T.sum_(T.exp(z), axis=1, keepdims=True))
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels.astype(int)] = 1.0
    z_true = T.sum_(T.mul(z, T.constant(onehot)), axis=1, keepdims=True)
    return T.mean_(T.sub(lse, z_true))


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = T.sub(pred, T.constant(target))
    return T.mean_(T.mul(diff, diff))


def accuracy(preds: np.ndarray, labels: np.ndarray) -> float:
    return float((preds.argmax(axis=1) == labels.astype(int)).mean())


# -- the training engine ------------------------------------------------------------------

class Runner:
    """Owns the model (ScaleGMN or baseline) and the per-task plumbing."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        model_overrides = dict(cfg.model)
        self.direction = model_overrides.get("direction", "forward")
        self.data = TaskData(cfg.zoo, cfg.seed, self.direction)
        out_dim = 2 if cfg.task == "inr-classify" else 1
        defaults = dict(
            group_kind=self.data.group_kind,
            direction=self.direction,
            out_dim=out_dim,
            head="invariant" if cfg.task != "inr-edit" else "equivariant-edit",
        )
        defaults.update(model_overrides)
        self.model_config = ScaleGMNConfig.from_dict(defaults)
        rng = np.random.default_rng(cfg.seed)
        if cfg.baseline == "none":
            self.model = ScaleGMNModel(self.model_config, self.data.template, rng)
        elif cfg.baseline == "flat-mlp":
            self.model = make_flat_baseline(self.data.nets[0], out_dim, rng)
        elif cfg.baseline == "stat-mlp":
            self.model = make_stat_baseline(self.data.nets[0], out_dim, rng)
        else:
            raise ValueError(f"unknown baseline {cfg.baseline!r}")
        self.is_scalegmn = isinstance(self.model, ScaleGMNModel)
        self.params = self.model.parameters()
        self.opt = AdamState(self.params, lr=cfg.lr)
        if cfg.task == "inr-edit":
            self._prepare_edit_targets()

    # -- edit-task targets: dilated source signals ---------------------------------

    def _prepare_edit_targets(self):
        meta = self.data.meta
        side = int(meta.get("image_side", 16))
        zoo_seed = int(meta.get("seed", 0))
        self.grid = grid_coords(side)
        targets = []
        for e in self.data.entries:
            src_index = int(e.extra.get("source_index", int(e.id.split("-")[-1])))
            image, _ = inr_source_image(zoo_seed, src_index, side)
            targets.append(dilate3x3(image).reshape(-1, 1))
        self.edit_targets = targets

    # -- prediction paths ------------------------------------------------------------

    def _predict_tensor(self, idx) -> Tensor:
        if self.is_scalegmn:
            return self.model.forward([self.data.graphs[i] for i in idx])
        return self.model.forward([self.data.nets[i] for i in idx])

    def _predict_tensor_graphs(self, nets, graphs) -> Tensor:
        if self.is_scalegmn:
            return self.model.forward(graphs)
        return self.model.forward(nets)

    def _edit_loss(self, idx) -> Tensor:
        graphs = [self.data.graphs[i] for i in idx]
        nets = [self.data.nets[i] for i in idx]
        edited = self.model.edit(graphs, nets)
        total = None
        for e, i in zip(edited, idx):
            out = ffnn_forward_taped(e, self.grid)
            diff = T.sub(out, T.constant(self.edit_targets[i]))
            term = T.mean_(T.mul(diff, diff))
            total = term if total is None else T.add(total, term)
        return T.mul(total, T.constant(1.0 / len(idx)))

    def _batch_loss(self, idx) -> Tensor:
        if self.cfg.task == "inr-edit":
            return self._edit_loss(idx)
        if self.cfg.augmentation != "none" and len(idx):
            nets, graphs = self._augmented(idx)
            pred = self._predict_tensor_graphs(nets, graphs)
        else:
            pred = self._predict_tensor(idx)
        labels = self.data.labels[idx]
        if self.cfg.task == "inr-classify":
            return cross_entropy(pred, labels)
        return mse(pred, labels[:, None])

    def _augmented(self, idx):
        rng = self._aug_rng
        nets, graphs = [], []
        kind = "sign" if self.cfg.augmentation == "sign" else "positive"
        for i in idx:
            net = self.data.nets[i]
            orbit = sample_orbit(kind, _hidden_widths(net), rng,
                                 lam=self.cfg.augmentation_lam, permute=False)
            t = apply_orbit_any(net, orbit)
            nets.append(t)
            graphs.append(self.data._build(t, self.direction))
        return nets, graphs

    # -- metrics -----------------------------------------------------------------------

    def evaluate(self, split: str, idx=None) -> dict[str, float]:
        idx = self.data.splits[split] if idx is None else idx
        if self.cfg.task == "inr-edit":
            loss = float(self._edit_loss(idx).data)
            return {"functional_mse": loss}
        preds = self._predict_tensor(idx).data
        labels = self.data.labels[idx]
        if self.cfg.task == "inr-classify":
            return {
                "accuracy": accuracy(preds, labels),
                "loss": float(cross_entropy(Tensor(preds), labels).data),
            }
        return {
            "kendall_tau": kendall_tau(preds[:, 0], labels, variant="b"),
            "loss": float(mse(Tensor(preds), labels[:, None]).data),
        }

    def metric_name(self) -> str:
        return {
            "inr-classify": "accuracy",
            "cnn-generalization": "kendall_tau",
            "inr-edit": "functional_mse",
        }[self.cfg.task]

    def _better(self, a: float, b: float) -> bool:
        if self.cfg.task == "inr-edit":
            return a < b
        return a > b

    # -- the loop -----------------------------------------------------------------------

    def train(self) -> dict:
        cfg = self.cfg
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng([cfg.seed, 1])
        self._aug_rng = np.random.default_rng([cfg.seed, 2])
        rows = []
        train_idx = self.data.splits["train"]
        metric = self.metric_name()
        best = -math.inf if cfg.task != "inr-edit" else math.inf
        best_epoch = -1
        diverged = False
        epochs_run = 0

        def record(epoch: int) -> dict:
            stats = {}
            for split in ("train", "val"):
                stats = self.evaluate(split)
                for k, v in stats.items():
                    rows.append((epoch, split, k, v))
            return stats  # val stats (last split evaluated)

        # epoch 0 is the initialization; zero-epoch runs keep exactly that
        val_stats = record(0)
        if self._better(val_stats[metric], best):
            best, best_epoch = val_stats[metric], 0
            self._save(out_dir / "checkpoint")
        for epoch in range(1, cfg.epochs + 1):
            epochs_run = epoch
            order = rng.permutation(train_idx)
            try:
                for start in range(0, len(order), cfg.batch_size):
                    batch = order[start : start + cfg.batch_size]
                    loss = self._batch_loss(batch)
                    grads = gradients(loss, self.params)
                    if cfg.weight_decay:
                        grads = [g + cfg.weight_decay * p.data
                                 for g, p in zip(grads, self.params)]
                    self.opt.step(grads)
            except NumericsError:
                diverged = True
            val_stats = record(epoch)
            if self._better(val_stats[metric], best):
                best, best_epoch = val_stats[metric], epoch
                self._save(out_dir / "checkpoint")
            if diverged:
                break
        self._write_csv(out_dir / "metrics.csv", rows)
        summary = {
            "task": cfg.task,
            "baseline": cfg.baseline,
            "epochs_run": epochs_run,
            "best_val_" + metric: best,
            "best_epoch": best_epoch,
            "diverged": diverged,
            "seed": cfg.seed,
        }
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=1),
                                              encoding="utf-8")
        return summary

    def _save(self, path: Path):
        if self.is_scalegmn:
            save_checkpoint(self.model, path)
        else:
            path.mkdir(parents=True, exist_ok=True)
            named = dict(self.model.named_parameters())
            np.savez(path / "baseline.npz",
                     **{k: v.data for k, v in named.items()})

    def load(self, path: Path):
        if self.is_scalegmn:
            from .model import load_checkpoint

            restored = load_checkpoint(Path(path))
            for (_, a), (_, b) in zip(
                sorted(self.model.named_parameters(), key=lambda kv: kv[0]),
                sorted(restored.named_parameters(), key=lambda kv: kv[0]),
            ):
                a.assign(b.data)
        else:
            blob = np.load(Path(path) / "baseline.npz")
            for name, p in self.model.named_parameters():
                p.assign(blob[name])

    @staticmethod
    def _write_csv(path: Path, rows):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "split", "metric", "value"])
            for row in rows:
                writer.writerow(row)

    # -- evaluation with orbit copies ------------------------------------------------------

    def eval_report(self, split: str = "test", with_orbit_copy: bool = False,
                    orbit_seed: int = 1234) -> dict:
        idx = self.data.splits[split]
        report = {"split": split, "n": int(len(idx))}
        report.update(self.evaluate(split))
        if with_orbit_copy:
            nets, graphs = self.data.orbit_copy(idx, orbit_seed, self.direction)
            if self.cfg.task == "inr-edit":
                report["orbit_functional_mse"] = None  # edited nets differ by the orbit
            else:
                preds = self._predict_tensor_graphs(nets, graphs).data
                labels = self.data.labels[idx]
                if self.cfg.task == "inr-classify":
                    report["orbit_accuracy"] = accuracy(preds, labels)
                else:
                    report["orbit_kendall_tau"] = kendall_tau(preds[:, 0], labels, "b")
        return report
