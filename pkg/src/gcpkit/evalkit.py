"""Regression/classification metrics and the symmetry property checker."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import geomkit as gk


class UndefinedCorrelation(ValueError):
    pass


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    return x, y


def mse(pred, target) -> float:
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def rmse(pred, target) -> float:
    return float(np.sqrt(mse(pred, target)))


def accuracy(pred_labels, labels) -> float:
    pred_labels, labels = np.asarray(pred_labels), np.asarray(labels)
    return float(np.mean(pred_labels == labels))


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.dot(xc, xc)), np.sqrt(np.dot(yc, yc))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelation("correlation is undefined for constant input")
    return float(np.clip(np.dot(xc, yc) / (sx * sy), -1.0, 1.0))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks."""
    x, y = _pair(x, y)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def kendall(x, y) -> float:
    """Kendall tau-b (tie corrected)."""
    x, y = _pair(x, y)
    iu = np.triu_indices(len(x), 1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    s = int(np.sum(dx * dy))
    n_x = int(np.count_nonzero(dx))  # pairs not tied in x
    n_y = int(np.count_nonzero(dy))
    if n_x == 0 or n_y == 0:
        raise UndefinedCorrelation("correlation is undefined for constant input")
    return float(s / np.sqrt(float(n_x) * float(n_y)))


def per_axis(metric, pred, target) -> list[float]:
    """Apply a correlation to each coordinate axis of N x 3 predictions."""
    pred = np.asarray(pred).reshape(-1, 3)
    target = np.asarray(target).reshape(-1, 3)
    return [metric(pred[:, k], target[:, k]) for k in range(3)]


def group_average(metric, pred, target, groups) -> float:
    """Metric computed within each group, then averaged over groups."""
    pred, target, groups = np.asarray(pred), np.asarray(target), np.asarray(groups)
    vals = []
    for g in np.unique(groups):
        m = groups == g
        try:
            vals.append(metric(pred[m], target[m]))
        except (UndefinedCorrelation, ValueError):
            continue
    return float(np.mean(vals)) if vals else float("nan")


@dataclass
class MetricReport:
    metrics: dict[str, float] = field(default_factory=dict)
    n: int = 0
    per_axis: dict[str, list[float]] = field(default_factory=dict)

    def lines(self) -> list[str]:
        out = [f"n={self.n}"]
        out += [f"{k}={v:.10g}" for k, v in self.metrics.items()]
        for k, vals in self.per_axis.items():
            out += [f"{k}_{ax}={v:.10g}" for ax, v in zip("xyz", vals)]
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def regression_report(pred, target) -> MetricReport:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    rep = MetricReport(n=int(pred.shape[0]))
    rep.metrics["mse"] = mse(pred, target)
    rep.metrics["rmse"] = float(np.sqrt(rep.metrics["mse"]))
    vector = pred.ndim >= 2 and pred.shape[-1] == 3
    for name, fn in (("pearson", pearson), ("spearman", spearman), ("kendall", kendall)):
        try:
            if vector:
                vals = per_axis(fn, pred, target)
                rep.per_axis[name] = vals
                rep.metrics[name] = float(np.mean(vals))
            else:
                rep.metrics[name] = fn(pred, target)
        except UndefinedCorrelation:
            rep.metrics[name] = float("nan")
    return rep


def classification_report(logits, labels) -> MetricReport:
    logits = np.asarray(logits)
    rep = MetricReport(n=len(labels))
    rep.metrics["accuracy"] = accuracy(np.argmax(logits, axis=1), labels)
    return rep


# ---------------------------------------------------------------------------
# symmetry checks
# ---------------------------------------------------------------------------

@dataclass
class EquivarianceReport:
    scalar_invariance: float = 0.0
    vector_equivariance: float = 0.0
    reflection_gap: float = 0.0
    permutation: float = 0.0
    frame_orthonormality: float = 0.0
    trials: int = 0

    def violations(self) -> dict[str, float]:
        return {
            "scalar_invariance": self.scalar_invariance,
            "vector_equivariance": self.vector_equivariance,
            "permutation": self.permutation,
            "frame_orthonormality": self.frame_orthonormality,
        }

    def passed(self, tol: float) -> bool:
        return all(v < tol for v in self.violations().values())

    def lines(self) -> list[str]:
        return [f"{k}={v:.6e}" if isinstance(v, float) else f"{k}={v}" for k, v in asdict(self).items()]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def frame_violation(frames: np.ndarray) -> float:
    """Max deviation of stacked frames from orthonormal, right-handed."""
    frames = np.asarray(frames).reshape(-1, 3, 3)
    if not len(frames):
        return 0.0
    gram = frames @ np.transpose(frames, (0, 2, 1))
    ortho = np.abs(gram - np.eye(3)).max()
    det = np.abs(np.linalg.det(frames) - 1.0).max()
    return float(max(ortho, det))


def random_graph(node_in: tuple[int, int], edge_in: tuple[int, int], n_nodes: int,
                 rng: np.random.Generator, scale: float = 2.0) -> gk.GeoGraph:
    """Fully connected graph with random features of the requested widths.

    The first edge vector channel is the unit displacement; other channels
    are random vectors, which the harness rotates along with the positions.
    """
    X = rng.normal(size=(n_nodes, 3)) * scale
    edges = gk.full_graph(n_nodes)
    n_e = len(edges)
    xi = rng.normal(size=(n_e, edge_in[1], 3))
    if edge_in[1]:
        xi[:, 0] = gk.unit_displacement(X, edges)
    e = rng.normal(size=(n_e, edge_in[0]))
    if edge_in[0] >= 16:
        dist = np.linalg.norm(X[edges[:, 0]] - X[edges[:, 1]], axis=1)
        e[:, :16] = gk.rbf_encode(dist, 16, 10.0)
    return gk.GeoGraph(X, edges, h=rng.normal(size=(n_nodes, node_in[0])),
                       chi=rng.normal(size=(n_nodes, node_in[1], 3)), e=e, xi=xi)


def _scalars(out) -> np.ndarray:
    parts = [out.node_scalars.data.ravel()]
    for t in (out.graph_scalar, out.class_logits):
        if t is not None:
            parts.append(t.data.ravel())
    return np.concatenate(parts)


def _vectors(out, R=None, t=None) -> np.ndarray:
    V = out.node_vectors.data
    P = out.node_positions.data if out.node_positions is not None else np.zeros((0, 3))
    if R is not None:
        V = V @ R.T
        P = P @ R.T + t
    return np.concatenate([V.ravel(), P.ravel()])


def _max_abs(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max()) if a.size else 0.0


def check_model(model, n_trials: int = 100, seed: int = 0, n_nodes: int = 8,
                max_translation: float = 10.0, graphs=None) -> EquivarianceReport:
    """Rotation/translation, reflection and relabeling trials on a model in eval mode.

    ``graphs`` may supply inputs; otherwise random fully connected graphs are
    drawn with widths matching ``model.cfg``.
    """
    rng = np.random.default_rng(seed)
    rep = EquivarianceReport(trials=n_trials)
    cfg = model.cfg
    for k in range(n_trials):
        g = graphs[k % len(graphs)] if graphs else random_graph(cfg.node_in, cfg.edge_in, n_nodes, rng)
        Q = gk.random_rotation(rng)
        direction = rng.normal(size=3)
        t = direction / np.linalg.norm(direction) * rng.uniform(0, max_translation)
        base = model(g)
        moved = model(g.transformed(Q, t))
        rep.scalar_invariance = max(rep.scalar_invariance, _max_abs(_scalars(moved), _scalars(base)))
        rep.vector_equivariance = max(rep.vector_equivariance, _max_abs(_vectors(moved), _vectors(base, Q, t)))

        mirrored = model(g.transformed(-np.eye(3)))
        rep.reflection_gap = max(rep.reflection_gap, _max_abs(_scalars(mirrored), _scalars(base)))

        perm = rng.permutation(g.n_nodes)
        relabeled = model(g.permuted(perm))
        a = np.concatenate([base.node_scalars.data[perm].ravel(), base.node_vectors.data[perm].ravel()])
        b = np.concatenate([relabeled.node_scalars.data.ravel(), relabeled.node_vectors.data.ravel()])
        viol = _max_abs(a, b)
        for name in ("graph_scalar", "class_logits", "node_positions"):
            x, y = getattr(base, name), getattr(relabeled, name)
            if x is not None:
                xd = x.data[perm] if name == "node_positions" else x.data
                viol = max(viol, _max_abs(xd, y.data))
        rep.permutation = max(rep.permutation, viol)

        for out in (base, moved, mirrored, relabeled):
            for frames in out.frames:
                rep.frame_orthonormality = max(rep.frame_orthonormality, frame_violation(frames))
    return rep
