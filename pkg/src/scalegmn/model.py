"""The metanetwork: equivariant message passing over parameter graphs.

Hidden-vertex paths from raw features to output are composed exclusively of
the scale-equivariant/invariant blocks, so every hidden representation keeps
the exact symmetry of the bias it started from; input/output vertices carry
no valid scaling symmetry and use unconstrained MLPs instead. Positional
encodings are fixed across datapoints and enter equivariant components only
through the invariant block (the augmented layers), breaking the permutation
symmetries that input networks do not actually have.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import tensor as T
from .activations import by_name
from .blocks import Canonicalizer, ReScaleEqNet, ScaleEqNet, ScaleInvNet, canon_mode_for
from .cnn import CnnParams
from .ffnn import FfnnParams
from .graph import GraphTemplate, build_graph, build_graph_cnn
from .nn import MLP, Linear, Module
from .tensor import ShapeError, Tensor


@dataclass
class ScaleGMNConfig:
    d_v: int = 32                 # vertex representation width
    d_e: int = 32                 # edge representation width
    d_msg: int = 32               # rescale-product width inside messages
    d_inv: int = 16               # invariant block width in edge updates
    d_readout: int = 32
    pe_dim: int = 8
    n_rounds: int = 2             # T message-passing layers
    n_eq_layers: int = 1          # K inside each equivariant net
    mlp_hidden: int = 32
    direction: str = "forward"    # or "bidirectional"
    group_kind: str = "sign"      # positive | sign | none
    sign_canon: str = "symmetrize"  # or "abs"
    rescale_variant: str = "hadamard"  # or "outer"
    edge_updates: bool = True
    pe_in_messages: bool = True
    skip_connections: bool = True
    readout: str = "deepsets+io-concat"  # or "output-concat-only"
    head: str = "invariant"       # or "equivariant-edit"
    out_dim: int = 1
    gamma_init: float = 0.01
    layer_norm: bool = True       # inside invariant-block and i/o MLPs only

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ScaleGMNConfig":
        known = {f for f in ScaleGMNConfig.__dataclass_fields__}
        return ScaleGMNConfig(**{k: v for k, v in d.items() if k in known})

    @property
    def mode(self) -> str:
        return canon_mode_for(self.group_kind, self.sign_canon)


def _tile_classes(classes: np.ndarray, batch: int) -> np.ndarray:
    return np.tile(classes, batch)


class _MessageLayer(Module):
    """One round's learnable functions (no weight tying across rounds)."""

    def __init__(self, cfg: ScaleGMNConfig, rng, bidirectional: bool):
        d_v, d_e, d_m, pe = cfg.d_v, cfg.d_e, cfg.d_msg, cfg.pe_dim
        mode, hid = cfg.mode, cfg.mlp_hidden
        ln = cfg.layer_norm
        pe3 = 3 * pe if cfg.pe_in_messages else 0
        pe1 = pe if cfg.pe_in_messages else 0
        self.rescale_fw = ReScaleEqNet([d_v, d_e], d_m, rng, variant=cfg.rescale_variant,
                                       mode=mode, hidden=hid, layer_norm=ln)
        self.msg_fw_hidden = ScaleEqNet([d_v + d_m], [d_v], rng, mode=mode,
                                        n_layers=cfg.n_eq_layers, extra_dim=pe3,
                                        hidden=hid, layer_norm=ln)
        self.rescale_fw_out = ReScaleEqNet([d_v, d_e], d_m, rng, variant=cfg.rescale_variant,
                                           mode=mode, hidden=hid, layer_norm=ln)
        self.msg_fw_out = MLP([d_v + d_m + pe3, hid, d_v], rng, layer_norm=ln)
        n_slots = 3 if bidirectional else 2
        self.upd_hidden = ScaleEqNet([n_slots * d_v], [d_v], rng, mode=mode,
                                     n_layers=cfg.n_eq_layers, extra_dim=pe1,
                                     hidden=hid, layer_norm=ln)
        self.upd_in = MLP([n_slots * d_v + pe1, hid, d_v], rng, layer_norm=ln)
        self.upd_out = MLP([n_slots * d_v + pe1, hid, d_v], rng, layer_norm=ln)
        if bidirectional:
            self.rescale_bw = ReScaleEqNet([d_v, d_e], d_m, rng, variant=cfg.rescale_variant,
                                           mode=mode, hidden=hid, layer_norm=ln)
            self.msg_bw_hidden = ScaleEqNet([d_v + d_m], [d_v], rng, mode=mode,
                                            n_layers=cfg.n_eq_layers, extra_dim=pe3,
                                            hidden=hid, layer_norm=ln)
            self.rescale_bw_in = ReScaleEqNet([d_v, d_e], d_m, rng, variant=cfg.rescale_variant,
                                              mode=mode, hidden=hid, layer_norm=ln)
            self.msg_bw_in = MLP([d_v + d_m + pe3, hid, d_v], rng, layer_norm=ln)
        if cfg.edge_updates:
            self.edge_inv = ScaleInvNet([d_v, d_v], cfg.d_inv, rng, mode=mode,
                                        hidden=hid, layer_norm=ln)
            self.upd_e = ScaleEqNet([d_e], [d_e], rng, mode=mode,
                                    n_layers=cfg.n_eq_layers,
                                    extra_dim=cfg.d_inv + pe3, hidden=hid,
                                    layer_norm=ln)


class ScaleGMNModel(Module):
    """Learnable parameters bound to one graph template (architecture)."""

    def __init__(self, config: ScaleGMNConfig, template: GraphTemplate, rng):
        if config.direction != template.direction:
            raise ShapeError(
                f"config direction {config.direction!r} != template {template.direction!r}"
            )
        if config.group_kind not in ("positive", "sign", "none"):
            raise ValueError(f"unknown group kind {config.group_kind!r}")
        self.config = config
        self.template = template
        cfg = config
        d_v, d_e, pe = cfg.d_v, cfg.d_e, cfg.pe_dim
        hid = cfg.mlp_hidden
        bid = cfg.direction == "bidirectional"
        self.pe_v = Tensor(rng.normal(0, 1.0, size=(template.n_vertex_classes, pe)), name="pe_v")
        self.pe_e = Tensor(rng.normal(0, 1.0, size=(template.n_edge_classes, pe)), name="pe_e")
        ln = cfg.layer_norm
        self.init_v_hidden = ScaleEqNet([template.dv_raw], [d_v], rng, mode=cfg.mode,
                                        n_layers=cfg.n_eq_layers, extra_dim=pe,
                                        hidden=hid, layer_norm=ln)
        self.init_v_in = MLP([template.dv_raw + pe, hid, d_v], rng, layer_norm=ln)
        self.init_v_out = MLP([template.dv_raw + pe, hid, d_v], rng, layer_norm=ln)
        self.init_e = ScaleEqNet([template.de_raw], [d_e], rng, mode=cfg.mode,
                                 n_layers=cfg.n_eq_layers, extra_dim=pe,
                                 hidden=hid, layer_norm=ln)
        self.rounds = [_MessageLayer(cfg, rng, bid) for _ in range(cfg.n_rounds)]
        if cfg.head == "invariant":
            self._build_readout(rng)
        elif cfg.head == "equivariant-edit":
            self._build_edit_head(rng)
        else:
            raise ValueError(f"unknown head {cfg.head!r}")
        self._mask_cache: dict[int, dict] = {}

    # -- construction helpers ---------------------------------------------------

    def _build_readout(self, rng):
        cfg, tpl = self.config, self.template
        self.read_canon = Canonicalizer(cfg.mode, cfg.d_v, rng,
                                        d_out=cfg.d_readout, hidden=cfg.mlp_hidden)
        phi_in = self.read_canon.d_out
        self.read_phi = MLP([phi_in, cfg.mlp_hidden, cfg.d_readout], rng,
                            layer_norm=cfg.layer_norm)
        n_in = int(tpl.is_input.sum())
        n_out = int(tpl.is_output.sum())
        if cfg.readout == "deepsets+io-concat":
            width = cfg.d_readout + (n_in + n_out) * cfg.d_v
        elif cfg.readout == "output-concat-only":
            width = n_out * cfg.d_v
            if cfg.direction == "bidirectional":
                width += n_in * cfg.d_v
        else:
            raise ValueError(f"unknown readout {cfg.readout!r}")
        self.read_final = MLP([width, cfg.mlp_hidden, cfg.out_dim], rng,
                              layer_norm=cfg.layer_norm)

    def _build_edit_head(self, rng):
        cfg, tpl = self.config, self.template
        if tpl.kind != "ffnn":
            raise ShapeError("equivariant edit head supports FFNN graphs")
        self.gamma = Tensor(np.array([cfg.gamma_init]), name="gamma")
        self.edit_v: dict[str, Module] = {}
        for name in tpl.vertex_class_names:
            if name.startswith("v:hidden"):
                self.edit_v[name] = Linear(cfg.d_v, 1, rng, bias=False)
            elif name.startswith("v:out"):
                self.edit_v[name] = MLP([cfg.d_v, cfg.mlp_hidden, 1], rng)
            # input vertices carry no bias parameter: no map
        self.edit_e: dict[str, Module] = {}
        for name in tpl.edge_class_names:
            if not name.startswith("bw:"):
                self.edit_e[name] = Linear(cfg.d_e, tpl.de_raw, rng, bias=False)

    # -- batched message passing ---------------------------------------------------

    def _masks(self, batch: int) -> dict:
        if batch in self._mask_cache:
            return self._mask_cache[batch]
        tpl = self.template
        tile = lambda m: np.tile(m.astype(np.float64), batch)[:, None]
        src, tgt = tpl.flat_indices(batch)
        masks = {
            "hidden": T.constant(tile(tpl.is_hidden)),
            "input": T.constant(tile(tpl.is_input)),
            "output": T.constant(tile(tpl.is_output)),
            "fw_tgt_out": T.constant(tile_edges(tpl.fw_tgt_is_output, batch)),
            "bw_tgt_in": T.constant(tile_edges(tpl.bw_tgt_is_input, batch)),
            "src": src,
            "tgt": tgt,
            "v_classes": _tile_classes(tpl.vertex_class, batch),
            "e_classes": _tile_classes(tpl.edge_class, batch),
            "bw_classes": None if tpl.bw_edge_class is None
            else _tile_classes(tpl.bw_edge_class, batch),
            "graph_of": np.repeat(np.arange(batch), tpl.n_v),
        }
        self._mask_cache[batch] = masks
        return masks

    def _combine(self, masks, hidden, v_in, v_out) -> Tensor:
        return T.add(
            T.add(T.mul(hidden, masks["hidden"]), T.mul(v_in, masks["input"])),
            T.mul(v_out, masks["output"]),
        )

    def embed(self, graphs: list) -> tuple[Tensor, Tensor, Tensor | None, dict]:
        """Run init + T rounds; returns (h_v, h_e, h_e_bw, masks)."""
        tpl, cfg = self.template, self.config
        batch = len(graphs)
        x_v, x_e, x_bw = tpl.batch(graphs)
        masks = self._masks(batch)
        bid = cfg.direction == "bidirectional"

        pe_v_rows = T.gather_rows(self.pe_v, masks["v_classes"])
        pe_e_rows = T.gather_rows(self.pe_e, masks["e_classes"])
        pe_bw_rows = (
            T.gather_rows(self.pe_e, masks["bw_classes"]) if bid else None
        )
        x_v_t, x_e_t = Tensor(x_v), Tensor(x_e)

        h_hidden = self.init_v_hidden.single(x_v_t, extra=pe_v_rows)
        io_in = T.concat([x_v_t, pe_v_rows], axis=1)
        h_v = self._combine(masks, h_hidden, self.init_v_in(io_in), self.init_v_out(io_in))
        h_e = self.init_e.single(x_e_t, extra=pe_e_rows)
        h_e_bw = self.init_e.single(Tensor(x_bw), extra=pe_bw_rows) if bid else None

        src, tgt = masks["src"], masks["tgt"]
        n_rows = batch * tpl.n_v
        pe_cat = pe_cat_bw = None
        if cfg.pe_in_messages:
            pe_tgt = T.gather_rows(self.pe_v, _tile_classes(tpl.vertex_class[tpl.fw_tgt], batch))
            pe_src = T.gather_rows(self.pe_v, _tile_classes(tpl.vertex_class[tpl.fw_src], batch))
            pe_cat = T.concat([pe_tgt, pe_src, pe_e_rows], axis=1)
            if bid:
                pe_cat_bw = T.concat([pe_src, pe_tgt, pe_bw_rows], axis=1)
        for layer in self.rounds:
            x_t = T.gather_rows(h_v, tgt)
            y_s = T.gather_rows(h_v, src)
            re_h = layer.rescale_fw([y_s, h_e])
            m_hid = layer.msg_fw_hidden.single(T.concat([x_t, re_h], axis=1), extra=pe_cat)
            re_o = layer.rescale_fw_out([y_s, h_e])
            out_in = T.concat([x_t, re_o] + ([pe_cat] if pe_cat is not None else []), axis=1)
            m_out = layer.msg_fw_out(out_in)
            mask_out = masks["fw_tgt_out"]
            m_edge = T.add(T.mul(m_out, mask_out),
                           T.mul(m_hid, T.constant(1.0 - mask_out.data)))
            m_fw = T.scatter_sum(m_edge, tgt, n_rows)

            parts = [h_v, m_fw]
            if bid:
                xb_t = y_s  # backward edges target the forward source
                yb_s = x_t
                re_b = layer.rescale_bw([yb_s, h_e_bw])
                mb_hid = layer.msg_bw_hidden.single(T.concat([xb_t, re_b], axis=1), extra=pe_cat_bw)
                re_bi = layer.rescale_bw_in([yb_s, h_e_bw])
                in_in = T.concat([xb_t, re_bi] + ([pe_cat_bw] if pe_cat_bw is not None else []), axis=1)
                mb_in = layer.msg_bw_in(in_in)
                mask_in = masks["bw_tgt_in"]
                mb_edge = T.add(T.mul(mb_in, mask_in),
                                T.mul(mb_hid, T.constant(1.0 - mask_in.data)))
                m_bw = T.scatter_sum(mb_edge, src, n_rows)
                parts.append(m_bw)

            upd_in_vec = T.concat(parts, axis=1)
            pe1 = pe_v_rows if cfg.pe_in_messages else None
            h_hidden_new = layer.upd_hidden.single(upd_in_vec, extra=pe1)
            io_vec = T.concat(parts + ([pe_v_rows] if cfg.pe_in_messages else []), axis=1)
            h_new = self._combine(masks, h_hidden_new,
                                  layer.upd_in(io_vec), layer.upd_out(io_vec))
            if cfg.edge_updates:
                si = layer.edge_inv([x_t, y_s])
                extra_e = T.concat([si, pe_cat], axis=1) if pe_cat is not None else si
                h_e_new = layer.upd_e.single(h_e, extra=extra_e)
                if bid:
                    si_b = layer.edge_inv([y_s, x_t])
                    extra_b = T.concat([si_b, pe_cat_bw], axis=1) if cfg.pe_in_messages else si_b
                    h_e_bw_new = layer.upd_e.single(h_e_bw, extra=extra_b)
                if cfg.skip_connections:
                    h_e = T.add(h_e, h_e_new)
                    if bid:
                        h_e_bw = T.add(h_e_bw, h_e_bw_new)
                else:
                    h_e = h_e_new
                    if bid:
                        h_e_bw = h_e_bw_new
            h_v = T.add(h_v, h_new) if cfg.skip_connections else h_new
        return h_v, h_e, h_e_bw, masks

    # -- heads -----------------------------------------------------------------------

    def readout(self, h_v: Tensor, masks: dict, batch: int) -> Tensor:
        cfg, tpl = self.config, self.template
        offs = np.arange(batch)[:, None] * tpl.n_v
        if cfg.readout == "deepsets+io-concat":
            canon = self.read_canon(h_v)
            per_vertex = T.mul(self.read_phi(canon), masks["hidden"])
            pooled = T.scatter_sum(per_vertex, masks["graph_of"], batch)
            io_idx = np.where(tpl.is_input | tpl.is_output)[0]
            rows = (offs + io_idx[None, :]).reshape(-1)
            io = T.reshape(T.gather_rows(h_v, rows), (batch, io_idx.size * cfg.d_v))
            return self.read_final(T.concat([pooled, io], axis=1))
        idx = np.where(tpl.is_output)[0]
        if cfg.direction == "bidirectional":
            idx = np.concatenate([np.where(tpl.is_input)[0], idx])
        rows = (offs + idx[None, :]).reshape(-1)
        flat = T.reshape(T.gather_rows(h_v, rows), (batch, idx.size * cfg.d_v))
        return self.read_final(flat)

    def forward(self, graphs: list) -> Tensor:
        """Invariant-head forward: [batch, out_dim] embedding/prediction."""
        if self.config.head != "invariant":
            raise ShapeError("forward() needs the invariant head; use edit()")
        h_v, _, _, masks = self.embed(graphs)
        return self.readout(h_v, masks, len(graphs))

    def __call__(self, graphs: list) -> Tensor:
        return self.forward(graphs)

    def edit(self, graphs: list, nets: list[FfnnParams]) -> list[SimpleNamespace]:
        """Equivariant edit: theta' = theta + gamma * decode(representations).

        Returns tape-connected parameter structures (Tensors) so a functional
        loss on the edited networks can backpropagate into the metanetwork.
        """
        cfg, tpl = self.config, self.template
        if cfg.head != "equivariant-edit":
            raise ShapeError("edit() needs the equivariant-edit head")
        h_v, h_e, _, masks = self.embed(graphs)
        batch = len(graphs)

        delta_b = None
        for name, mod in self.edit_v.items():
            cls = tpl.vertex_class_names.index(name)
            mask = T.constant((masks["v_classes"] == cls).astype(np.float64)[:, None])
            term = T.mul(mod(h_v), mask)
            delta_b = term if delta_b is None else T.add(delta_b, term)
        delta_w = None
        for name, mod in self.edit_e.items():
            cls = tpl.edge_class_names.index(name)
            mask = T.constant((masks["e_classes"] == cls).astype(np.float64)[:, None])
            term = T.mul(mod(h_e), mask)
            delta_w = term if delta_w is None else T.add(delta_w, term)

        dims = tpl.dims
        edited = []
        v_off = np.concatenate([[0], np.cumsum(dims)])
        e_sizes = [dims[l + 1] * dims[l] for l in range(len(dims) - 1)]
        e_off = np.concatenate([[0], np.cumsum(e_sizes)])
        for b, net in enumerate(nets):
            weights, biases = [], []
            for l in range(len(dims) - 1):
                w_rows = T.narrow(delta_w, 0, b * tpl.n_e + int(e_off[l]), e_sizes[l])
                dw = T.reshape(w_rows, (dims[l + 1], dims[l]))
                w_new = T.add(Tensor(net.weights[l]), T.mul(self.gamma, dw))
                b_rows = T.narrow(delta_b, 0, b * tpl.n_v + int(v_off[l + 1]), dims[l + 1])
                db = T.reshape(b_rows, (dims[l + 1],))
                b_new = T.add(Tensor(net.biases[l]), T.mul(self.gamma, db))
                weights.append(w_new)
                biases.append(b_new)
            edited.append(SimpleNamespace(weights=weights, biases=biases,
                                          activations=list(net.activations)))
        return edited

    def edit_params(self, graphs: list, nets: list[FfnnParams]) -> list[FfnnParams]:
        """Edit head as a plain parameter map (numpy in, numpy out)."""
        return [
            FfnnParams([w.data.copy() for w in e.weights],
                       [b.data.copy() for b in e.biases], e.activations)
            for e in self.edit(graphs, nets)
        ]


def tile_edges(mask: np.ndarray, batch: int) -> np.ndarray:
    return np.tile(mask.astype(np.float64), batch)[:, None]


# -- template (re)construction ---------------------------------------------------------

def template_from_spec(spec: dict) -> GraphTemplate:
    """Rebuild a GraphTemplate from its serialized description."""
    kind = spec["kind"]
    acts = [by_name(n, spec.get("omega0", 0.0)) for n in spec["activations"]]
    if kind == "ffnn":
        dims = spec["dims"]
        weights = [np.ones((dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
        biases = [np.zeros(dims[i + 1]) for i in range(len(dims) - 1)]
        net = FfnnParams(weights, biases, acts)
        graph = build_graph(net, direction=spec["direction"])
    elif kind == "cnn":
        dims = spec["dims"]
        kh, kw = spec["kernel_hw"]
        chain = dims[:-1]
        kernels = [np.ones((chain[i + 1], chain[i], kh, kw)) for i in range(len(chain) - 1)]
        biases = [np.zeros(chain[i + 1]) for i in range(len(chain) - 1)]
        net = CnnParams(kernels, biases, acts[:-1], np.ones((dims[-1], chain[-1])),
                        np.zeros(dims[-1]))
        graph = build_graph_cnn(net, direction=spec["direction"])
    else:
        raise ValueError(f"unknown template kind {kind!r}")
    return GraphTemplate(graph)


def template_spec(tpl: GraphTemplate) -> dict:
    omega0 = 0.0
    for a in tpl.activations:
        if a.name == "sine":
            omega0 = a.omega0
    spec = {
        "kind": tpl.kind,
        "dims": list(tpl.dims),
        "direction": tpl.direction,
        "activations": [a.name for a in tpl.activations],
        "omega0": omega0,
    }
    if tpl.kind == "cnn":
        side = int(round(np.sqrt(tpl.de_raw)))
        spec["kernel_hw"] = [side, side]
    return spec


# -- checkpoints --------------------------------------------------------------------------

def save_checkpoint(model: ScaleGMNModel, path) -> None:
    """Manifest (config + template + tensor index) plus flat little-endian f32."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    named = sorted(model.named_parameters(), key=lambda kv: kv[0])
    index, offset = [], 0
    blobs = []
    for name, p in named:
        index.append({"name": name, "shape": list(p.shape), "offset": offset})
        blobs.append(np.asarray(p.data, dtype="<f4").reshape(-1))
        offset += p.size
    manifest = {
        "config": model.config.to_dict(),
        "template": template_spec(model.template),
        "tensors": index,
    }
    (path / "checkpoint.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    np.concatenate(blobs).tofile(path / "params.bin")


def load_checkpoint(path) -> ScaleGMNModel:
    path = Path(path)
    manifest = json.loads((path / "checkpoint.json").read_text(encoding="utf-8"))
    config = ScaleGMNConfig.from_dict(manifest["config"])
    template = template_from_spec(manifest["template"])
    model = ScaleGMNModel(config, template, np.random.default_rng(0))
    flat = np.fromfile(path / "params.bin", dtype="<f4").astype(np.float64)
    params = dict(model.named_parameters())
    for entry in manifest["tensors"]:
        p = params[entry["name"]]
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        p.assign(flat[entry["offset"] : entry["offset"] + n].reshape(entry["shape"]))
    return model
