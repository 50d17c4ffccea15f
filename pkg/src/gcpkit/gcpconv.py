"""Geometry-complete graph convolution layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ParamStore, Tensor
from .gcp import GCP, ConfigError, GcpConfig, Geometry, ResGCP, ScalarVector

NORM_EPS = 1e-8


@dataclass
class ConvConfig:
    node_widths: tuple[int, int]
    edge_widths: tuple[int, int]
    message_depth: int = 8
    ffn_depth: int = 1
    aggregation: str = "mean"
    dropout_rate: float = 0.1
    update_positions: bool = False
    downscale: int = 3
    ablate_frames: bool = False
    ablate_scalars: bool = False
    ablate_vectors: bool = False
    ablate_resgcp: bool = False

    def __post_init__(self):
        if self.message_depth < 1:
            raise ConfigError("message_depth must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.aggregation not in ("mean", "sum"):
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")

    def gcp(self, t_in, t_out, r_in, r_out, mode="node", **kw) -> GcpConfig:
        return GcpConfig(t_in=t_in, t_out=t_out, r_in=r_in, r_out=r_out, downscale=self.downscale,
                         mode=mode, ablate_frames=self.ablate_frames, ablate_scalars=self.ablate_scalars,
                         ablate_vectors=self.ablate_vectors, **kw)


def equivariant_norm(x: ScalarVector, store: ParamStore | None = None, prefix: str | None = None) -> ScalarVector:
    """Layer norm on scalars; vectors divided by the RMS of their channel norms.

    With ``store``/``prefix`` the scalar path gets a learned affine (gain, bias).
    """
    s, V = x.s, x.V
    if s.shape[1]:
        mu = s.mean(axis=1, keepdims=True)
        centered = s - mu
        var = (centered * centered).mean(axis=1, keepdims=True)
        s = centered / dc.sqrt(var + 1e-5)
        if store is not None:
            s = s * store[f"{prefix}.gain"] + store[f"{prefix}.bias"]
    if V.shape[1]:
        sq = (V * V).sum(axis=2)  # rows x channels
        ms = sq.mean(axis=1, keepdims=True)
        # clamp the RMS below at NORM_EPS; rows above the floor are untouched
        floor = Tensor(np.where(ms.data < NORM_EPS**2, NORM_EPS**2, 0.0))
        rms = dc.sqrt(ms + floor)
        V = V / rms.reshape(V.shape[0], 1, 1)
    return ScalarVector(s, V)


def equivariant_dropout(x: ScalarVector, rate: float, rng: np.random.Generator | None,
                        training: bool = True) -> ScalarVector:
    """Elementwise dropout on scalars; whole vector channels are dropped together."""
    if not training or rate == 0.0 or rng is None:
        return x
    keep = 1.0 - rate
    s, V = x.s, x.V
    if s.shape[1]:
        s = s * Tensor((rng.random(s.shape) < keep) / keep)
    if V.shape[1]:
        mask = (rng.random(V.shape[:2]) < keep) / keep
        V = V * Tensor(mask[:, :, None])
    return ScalarVector(s, V)


class GCPConv:
    def __init__(self, store: ParamStore, prefix: str, cfg: ConvConfig):
        self.cfg = cfg
        self.store = store
        self.prefix = prefix
        t, r = cfg.node_widths
        te, re = cfg.edge_widths
        residual = not cfg.ablate_resgcp
        self.message = GCP(store, f"{prefix}.msg0", cfg.gcp(2 * t + te, t, 2 * r + re, r, mode="edge"))
        self.message_updates = [
            ResGCP(store, f"{prefix}.msg{k + 1}", cfg.gcp(t, t, r, r, mode="edge"), residual=residual)
            for k in range(cfg.message_depth)
        ]
        if t:
            store.add(f"{prefix}.norm.gain", np.ones(t))
            store.bias(f"{prefix}.norm.bias", t)
        self.ffn_in = GCP(store, f"{prefix}.ffn0", cfg.gcp(t, t, r, r, has_gate=False, has_scalar_act=False))
        self.ffn = [
            ResGCP(store, f"{prefix}.ffn{k + 1}", cfg.gcp(t, t, r, r), residual=residual)
            for k in range(cfg.ffn_depth)
        ]
        self.position = None
        if cfg.update_positions:
            self.position = GCP(store, f"{prefix}.pos", cfg.gcp(t, t, r, 1))

    def build_messages(self, nodes: ScalarVector, edges: ScalarVector, geom: Geometry) -> ScalarVector:
        dst, src = geom.edges[:, 0], geom.edges[:, 1]
        cat = ScalarVector.concat([nodes.gather(dst), nodes.gather(src), edges])
        return self.message(cat, geom)

    def aggregate(self, messages: ScalarVector, geom: Geometry) -> ScalarVector:
        dst = geom.edges[:, 0]
        pool = dc.segment_mean if self.cfg.aggregation == "mean" else dc.segment_sum
        return ScalarVector(pool(messages.s, dst, geom.n_nodes), pool(messages.V, dst, geom.n_nodes))

    def __call__(self, nodes: ScalarVector, edges: ScalarVector, X, geom: Geometry,
                  rng: np.random.Generator | None = None, training: bool = False):
        """Returns updated node channels and positions (X passes through untouched
        when positions are not updated)."""
        m = self.build_messages(nodes, edges, geom)
        for layer in self.message_updates:
            m = layer(m, geom)
        n_hat = nodes + self.aggregate(m, geom)
        n_hat = equivariant_dropout(n_hat, self.cfg.dropout_rate, rng, training)
        has_affine = f"{self.prefix}.norm.gain" in self.store
        n_hat = equivariant_norm(n_hat, self.store if has_affine else None, f"{self.prefix}.norm")
        f = self.ffn_in(n_hat, geom)
        for layer in self.ffn:
            f = layer(f, geom)
        out = n_hat + f
        if self.position is None:
            return out, X
        shift = self.position(out, geom).V  # N x 1 x 3
        return out, X + shift.reshape(geom.n_nodes, 3)
