"""Geometry-complete perceptron on paired (scalar, vector) channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import ContractError, ParamStore, Tensor


class ConfigError(ValueError):
    pass


@dataclass
class ScalarVector:
    """Invariant scalars ``s`` (B x t) and equivariant vectors ``V`` (B x r x 3)."""

    s: Tensor
    V: Tensor

    def __post_init__(self):
        self.s = dc.as_tensor(self.s)
        self.V = dc.as_tensor(self.V)
        if self.s.ndim != 2 or self.V.ndim != 3 or self.V.shape[2] != 3:
            raise ContractError(f"bad channel shapes s={self.s.shape} V={self.V.shape}")
        if self.s.shape[0] != self.V.shape[0]:
            raise ContractError(f"row counts differ: {self.s.shape[0]} vs {self.V.shape[0]}")
        if self.s.shape[1] == 0 and self.V.shape[1] == 0:
            raise ContractError("ScalarVector needs at least one channel")

    @property
    def rows(self) -> int:
        return self.s.shape[0]

    @property
    def widths(self) -> tuple[int, int]:
        return self.s.shape[1], self.V.shape[1]

    def __add__(self, other: "ScalarVector") -> "ScalarVector":
        return ScalarVector(self.s + other.s, self.V + other.V)

    @staticmethod
    def concat(parts) -> "ScalarVector":
        return ScalarVector(dc.concat([p.s for p in parts], axis=1), dc.concat([p.V for p in parts], axis=1))

    def gather(self, index: np.ndarray) -> "ScalarVector":
        return ScalarVector(dc.gather(self.s, index), dc.gather(self.V, index))


@dataclass
class Geometry:
    """Edge frames plus the topology needed to pool them onto nodes."""

    frames: np.ndarray  # E x 3 x 3, rows (a, b, c)
    edges: np.ndarray  # E x 2, (receiver i, sender j)
    n_nodes: int

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass
class GcpConfig:
    t_in: int
    t_out: int
    r_in: int
    r_out: int
    downscale: int = 3
    mode: str = "node"
    ablate_frames: bool = False
    ablate_scalars: bool = False
    ablate_vectors: bool = False
    has_gate: bool = True
    has_scalar_act: bool = True

    def __post_init__(self):
        if min(self.t_in, self.t_out, self.r_in, self.r_out) < 0:
            raise ConfigError("channel widths must be non-negative")
        if self.mode not in ("node", "edge"):
            raise ConfigError(f"mode must be 'node' or 'edge', got {self.mode!r}")
        if self.downscale < 1:
            raise ConfigError("downscale must be >= 1")

    @property
    def use_vectors(self) -> bool:
        return not self.ablate_vectors and self.r_in > 0

    @property
    def r_down(self) -> int:
        return max(1, self.r_in // self.downscale) if self.use_vectors else 0

    @property
    def t_used(self) -> int:
        return 0 if self.ablate_scalars else self.t_in

    @property
    def n_frame_scalars(self) -> int:
        return 9 if (self.use_vectors and not self.ablate_frames) else 0

    @property
    def concat_width(self) -> int:
        return self.t_used + self.n_frame_scalars + self.r_down


class GCP:
    """One perceptron unit. Weights live in ``store`` under ``prefix``."""

    def __init__(self, store: ParamStore, prefix: str, cfg: GcpConfig):
        self.cfg = cfg
        self.store = store
        self.prefix = prefix
        if cfg.concat_width == 0 and cfg.t_out > 0:
            raise ConfigError(f"{prefix}: no inputs feed the scalar output")
        if cfg.use_vectors:
            store.weight(f"{prefix}.w_dz", cfg.r_in, cfg.r_down)
            if cfg.n_frame_scalars:
                store.weight(f"{prefix}.w_ds", cfg.r_in, 3)
        if cfg.t_out:
            store.weight(f"{prefix}.w_s", cfg.concat_width, cfg.t_out)
            store.bias(f"{prefix}.b_s", cfg.t_out)
        if cfg.use_vectors and cfg.r_out:
            store.weight(f"{prefix}.w_uz", cfg.r_down, cfg.r_out)
            if cfg.has_gate and cfg.t_out:
                store.weight(f"{prefix}.w_g", cfg.t_out, cfg.r_out)
                store.bias(f"{prefix}.b_g", cfg.r_out)

    def p(self, name: str) -> Tensor:
        return self.store[f"{self.prefix}.{name}"]

    def frame_scalars(self, Vs: Tensor, geom: Geometry, rows: int) -> Tensor:
        """Project the three V_s channels onto edge frames -> rows x 9."""
        cfg = self.cfg
        frames = dc.Tensor(geom.frames)
        if cfg.mode == "edge":
            if rows != geom.n_edges:
                raise ContractError(f"{self.prefix}: {rows} edge rows but {geom.n_edges} frames")
            q = dc.einsum("bkd,bfd->bkf", Vs, frames)
            return q.reshape(rows, 9)
        if rows != geom.n_nodes:
            raise ContractError(f"{self.prefix}: {rows} node rows but graph has {geom.n_nodes} nodes")
        dst = geom.edges[:, 0]
        q = dc.einsum("bkd,bfd->bkf", dc.gather(Vs, dst), frames).reshape(len(dst), 9)
        return dc.segment_mean(q, dst, rows)

    def __call__(self, x: ScalarVector, geom: Geometry) -> ScalarVector:
        cfg = self.cfg
        t_in, r_in = x.widths
        if t_in != cfg.t_in or r_in != cfg.r_in:
            raise ContractError(f"{self.prefix}: got widths {(t_in, r_in)}, expected {(cfg.t_in, cfg.r_in)}")
        rows = x.rows
        pieces = []
        if cfg.t_used:
            pieces.append(x.s)
        z = None
        if cfg.use_vectors:
            z = dc.einsum("brd,rk->bkd", x.V, self.p("w_dz"))
            if cfg.n_frame_scalars:
                Vs = dc.einsum("brd,rk->bkd", x.V, self.p("w_ds"))
                pieces.append(self.frame_scalars(Vs, geom, rows))
            pieces.append(dc.norm(z, axis=2))

        if cfg.t_out:
            s_cat = pieces[0] if len(pieces) == 1 else dc.concat(pieces, axis=1)
            s_v = s_cat @ self.p("w_s") + self.p("b_s")
            s_out = dc.smooth_gate(s_v) if cfg.has_scalar_act else s_v
        else:
            s_v = None
            s_out = Tensor(np.zeros((rows, 0)))

        if z is not None and cfg.r_out:
            V_u = dc.einsum("bkd,ko->bod", z, self.p("w_uz"))
            if cfg.has_gate and s_v is not None:
                gate = dc.sigmoid(dc.relu(s_v) @ self.p("w_g") + self.p("b_g"))
                V_out = V_u * gate.reshape(rows, cfg.r_out, 1)
            else:
                V_out = V_u
        else:
            V_out = Tensor(np.zeros((rows, cfg.r_out, 3)))
        return ScalarVector(s_out, V_out)


class ResGCP:
    """x + GCP(x); with ``residual=False`` it is the bare GCP (ResGCP ablation)."""

    def __init__(self, store: ParamStore, prefix: str, cfg: GcpConfig, residual: bool = True):
        if cfg.t_in != cfg.t_out or cfg.r_in != cfg.r_out:
            raise ConfigError(f"{prefix}: residual needs matching widths, got "
                              f"({cfg.t_in},{cfg.r_in}) -> ({cfg.t_out},{cfg.r_out})")
        self.inner = GCP(store, prefix, cfg)
        self.residual = residual

    def __call__(self, x: ScalarVector, geom: Geometry) -> ScalarVector:
        out = self.inner(x, geom)
        return x + out if self.residual else out
