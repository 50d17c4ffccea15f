"""The end-to-end network: centre, build frames, embed, convolve, project, read out."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from . import diffcore as dc
from . import geomkit as gk
from .diffcore import NumericError, ParamStore, Tensor
from .gcp import GCP, ConfigError, GcpConfig, Geometry, ScalarVector
from .gcpconv import ConvConfig, GCPConv

HEADS = ("graph_scalar", "node_positions", "graph_class")


@dataclass
class ModelConfig:
    node_in: tuple[int, int] = (1, 3)
    edge_in: tuple[int, int] = (17, 1)
    node_hidden: tuple[int, int] = (32, 16)
    edge_hidden: tuple[int, int] = (16, 4)
    num_layers: int = 4
    message_depth: int = 8
    ffn_depth: int = 1
    downscale: int = 3
    dropout: float = 0.1
    dense_dropout: float = 0.1
    aggregation: str = "mean"
    head: str = "node_positions"
    n_classes: int = 2
    ablate_frames: bool = False
    ablate_resgcp: bool = False
    ablate_scalars: bool = False
    ablate_vectors: bool = False

    def __post_init__(self):
        for f in ("node_in", "edge_in", "node_hidden", "edge_hidden"):
            setattr(self, f, tuple(int(v) for v in getattr(self, f)))
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")

    @property
    def update_positions(self) -> bool:
        return self.head == "node_positions"

    def conv_config(self) -> ConvConfig:
        return ConvConfig(
            node_widths=self.node_hidden, edge_widths=self.edge_hidden, message_depth=self.message_depth,
            ffn_depth=self.ffn_depth, aggregation=self.aggregation, dropout_rate=self.dropout,
            update_positions=self.update_positions, downscale=self.downscale,
            ablate_frames=self.ablate_frames, ablate_scalars=self.ablate_scalars,
            ablate_vectors=self.ablate_vectors, ablate_resgcp=self.ablate_resgcp,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class GraphBatch:
    """Several GeoGraphs packed into one disjoint graph."""

    positions: np.ndarray
    edges: np.ndarray
    h: np.ndarray
    chi: np.ndarray
    e: np.ndarray
    xi: np.ndarray
    batch: np.ndarray
    n_graphs: int

    @classmethod
    def from_graphs(cls, graphs: Sequence[gk.GeoGraph]) -> "GraphBatch":
        offsets = np.cumsum([0] + [g.n_nodes for g in graphs[:-1]])
        return cls(
            positions=np.concatenate([g.positions for g in graphs]),
            edges=np.concatenate([g.edges + o for g, o in zip(graphs, offsets)]),
            h=np.concatenate([g.h for g in graphs]),
            chi=np.concatenate([g.chi for g in graphs]),
            e=np.concatenate([g.e for g in graphs]),
            xi=np.concatenate([g.xi for g in graphs]),
            batch=np.concatenate([np.full(g.n_nodes, k) for k, g in enumerate(graphs)]),
            n_graphs=len(graphs),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.positions)


@dataclass
class TaskOutput:
    graph_scalar: Tensor | None = None
    node_positions: Tensor | None = None
    class_logits: Tensor | None = None
    node_scalars: Tensor | None = None
    node_vectors: Tensor | None = None
    frames: list[np.ndarray] = field(default_factory=list)


def _check_finite(t: Tensor, where: str) -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"non-finite activations after {where}")


class GCPNet:
    """Parameters are registered into ``store`` at construction."""

    def __init__(self, cfg: ModelConfig, store: ParamStore | None = None, seed: int = 0):
        self.cfg = cfg
        self.store = store if store is not None else ParamStore(seed)
        s = self.store
        conv_cfg = cfg.conv_config()
        self.conv_cfg = conv_cfg
        (t0, r0), (te0, re0) = cfg.node_in, cfg.edge_in
        (t, r), (te, re) = cfg.node_hidden, cfg.edge_hidden
        self.embed_nodes = GCP(s, "embed.node", conv_cfg.gcp(t0, t, r0, r))
        self.embed_edges = GCP(s, "embed.edge", conv_cfg.gcp(te0, te, re0, re, mode="edge"))
        self.layers = [GCPConv(s, f"conv{k}", conv_cfg) for k in range(cfg.num_layers)]
        self.project = GCP(s, "project.node", conv_cfg.gcp(t, t, r, r, has_gate=False, has_scalar_act=False))
        if cfg.head in ("graph_scalar", "graph_class"):
            n_out = 1 if cfg.head == "graph_scalar" else cfg.n_classes
            s.weight("head.w1", t, t)
            s.bias("head.b1", t)
            s.weight("head.w2", t, n_out)
            s.bias("head.b2", n_out)

    def forward(self, graphs: GraphBatch | gk.GeoGraph | Sequence[gk.GeoGraph],
                training: bool = False, rng: np.random.Generator | None = None) -> TaskOutput:
        b = _as_batch(graphs)
        cfg = self.cfg
        if b.h.shape[1] != cfg.node_in[0] or b.chi.shape[1] != cfg.node_in[1]:
            raise ConfigError(f"node features {(b.h.shape[1], b.chi.shape[1])} != configured {cfg.node_in}")
        if b.e.shape[1] != cfg.edge_in[0] or b.xi.shape[1] != cfg.edge_in[1]:
            raise ConfigError(f"edge features {(b.e.shape[1], b.xi.shape[1])} != configured {cfg.edge_in}")
        out = TaskOutput()
        X0, centroids = gk.centralize_batch(b.positions, b.batch, b.n_graphs)
        frames = gk.localize(X0, b.edges)
        out.frames.append(frames)
        geom = Geometry(frames, b.edges, b.n_nodes)

        nodes = self.embed_nodes(ScalarVector(b.h, b.chi), geom)
        edges = self.embed_edges(ScalarVector(b.e, b.xi), geom)
        X = Tensor(X0) if cfg.update_positions else X0
        for k, layer in enumerate(self.layers):
            nodes, X = layer(nodes, edges, X, geom, rng=rng, training=training)
            _check_finite(nodes.s, f"conv layer {k}")
            _check_finite(nodes.V, f"conv layer {k}")

        if cfg.update_positions:
            _check_finite(X, "position update")
            frames = gk.localize(X.data, b.edges)
            out.frames.append(frames)
            geom = Geometry(frames, b.edges, b.n_nodes)
            out.node_positions = X + Tensor(centroids[b.batch])
        final = self.project(nodes, geom)
        out.node_scalars, out.node_vectors = final.s, final.V

        if cfg.head in ("graph_scalar", "graph_class"):
            pooled = dc.segment_mean(final.s, b.batch, b.n_graphs)
            hidden = dc.relu(pooled @ self.store["head.w1"] + self.store["head.b1"])
            if training and rng is not None and cfg.dense_dropout > 0:
                keep = 1.0 - cfg.dense_dropout
                hidden = hidden * Tensor((rng.random(hidden.shape) < keep) / keep)
            logits = hidden @ self.store["head.w2"] + self.store["head.b2"]
            if cfg.head == "graph_scalar":
                out.graph_scalar = logits.reshape(b.n_graphs)
            else:
                out.class_logits = logits
        return out

    __call__ = forward


def _as_batch(graphs) -> GraphBatch:
    if isinstance(graphs, GraphBatch):
        return graphs
    if isinstance(graphs, gk.GeoGraph):
        return GraphBatch.from_graphs([graphs])
    return GraphBatch.from_graphs(list(graphs))


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean over every entry (graphs, nodes and coordinates)."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise dc.DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - Tensor(target)
    return (diff * diff).mean()


def cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != len(labels):
        raise dc.DimensionError(f"logits {logits.shape} vs {len(labels)} labels")
    logp = dc.log_softmax(logits, axis=1)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(len(labels)), labels] = 1.0
    return -(logp * Tensor(onehot)).sum() * (1.0 / len(labels))


def loss(out: TaskOutput, target) -> Tensor:
    if out.class_logits is not None:
        return cross_entropy(out.class_logits, target)
    if out.node_positions is not None:
        return mse_loss(out.node_positions, target)
    if out.graph_scalar is not None:
        return mse_loss(out.graph_scalar, target)
    raise ConfigError("model output has no head to score")
