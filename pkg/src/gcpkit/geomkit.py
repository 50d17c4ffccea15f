"""Geometry kernels: centering, edge frames, scalarization, graphs, RBFs.

Everything here is plain numpy and side-effect free. Positions are N x 3,
edge lists are E x 2 integer arrays of ``(i, j)`` pairs where ``i`` is the
receiving node and ``j`` the sending neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FRAME_EPS = 1e-8


class ParameterError(ValueError):
    pass


def centralize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    centroid = X.mean(axis=0)
    return X - centroid, centroid


def decentralize(X: np.ndarray, centroid: np.ndarray) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) + np.asarray(centroid, dtype=np.float64)


def centralize_batch(X: np.ndarray, batch: np.ndarray, n_graphs: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-graph centering for a disjoint union of graphs."""
    counts = np.bincount(batch, minlength=n_graphs).astype(np.float64)
    sums = np.zeros((n_graphs, 3))
    np.add.at(sums, batch, X)
    centroids = sums / np.maximum(counts, 1.0)[:, None]
    return X - centroids[batch], centroids


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, FRAME_EPS)


def _fallback_b(a: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to each row of ``a``, from +z (or +x when a is along z)."""
    ref = np.zeros_like(a)
    ref[:, 2] = 1.0
    along_z = np.abs(a[:, 2]) > 0.9
    ref[along_z] = (1.0, 0.0, 0.0)
    b = ref - np.sum(ref * a, axis=1, keepdims=True) * a
    return _unit(b)


def localize(X0: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Per-edge frames as an E x 3 x 3 array whose rows are (a, b, c).

    ``X0`` must already be centered: the ``b`` axis uses absolute positions,
    so uncentered input gives translation-dependent frames.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    xi = X0[edges[:, 0]]
    xj = X0[edges[:, 1]]
    diff = xi - xj
    a = _unit(diff)
    # xi == xj: no direction at all, pick +x so the frame stays orthonormal
    flat = np.linalg.norm(diff, axis=1) < FRAME_EPS
    if flat.any():
        a[flat] = (1.0, 0.0, 0.0)
    cross = np.cross(xi, xj)
    cn = np.linalg.norm(cross, axis=1)
    b = cross / np.maximum(cn, FRAME_EPS)[:, None]
    degenerate = cn < FRAME_EPS
    if degenerate.any():
        b[degenerate] = _fallback_b(a[degenerate])
    c = np.cross(a, b)
    return np.stack([a, b, c], axis=1)


def scalarize(V: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Project k vectors (k x 3) onto a frame (3 x 3, rows a,b,c) -> 3k scalars.

    Batched inputs (... x k x 3 with ... x 3 x 3) are handled too.
    """
    V = np.asarray(V, dtype=np.float64)
    frame = np.asarray(frame, dtype=np.float64)
    q = np.einsum("...kd,...fd->...kf", V, frame)
    return q.reshape(q.shape[:-2] + (-1,))


def knn_graph(X: np.ndarray, k: int) -> np.ndarray:
    """Edges (i, j) joining each node i to its k nearest neighbors j."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if not 1 <= k < n:
        raise ParameterError(f"k must satisfy 1 <= k < N, got k={k}, N={n}")
    d = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
    np.fill_diagonal(d, np.inf)
    # stable sort keeps the smaller index first among equal distances
    nbrs = np.argsort(d, axis=1, kind="stable")[:, :k]
    dst = np.repeat(np.arange(n), k)
    return np.stack([dst, nbrs.reshape(-1)], axis=1)


def full_graph(n: int) -> np.ndarray:
    """All directed pairs (i, j), i != j, in row-major order."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = i != j
    return np.stack([i[mask], j[mask]], axis=1)


def rbf_encode(d, n_rbf: int = 16, d_max: float = 20.0) -> np.ndarray:
    if n_rbf < 2:
        raise ParameterError(f"n_rbf must be >= 2, got {n_rbf}")
    d = np.asarray(d, dtype=np.float64)
    centers = np.linspace(0.0, d_max, n_rbf)
    sigma = centers[1] - centers[0]
    return np.exp(-((d[..., None] - centers) ** 2) / (2.0 * sigma**2))


def unit_displacement(X: np.ndarray, edges: np.ndarray) -> np.ndarray:
    diff = X[edges[:, 0]] - X[edges[:, 1]]
    return _unit(diff)


def orientation_vectors(X: np.ndarray) -> np.ndarray:
    """Unit vectors toward the next and previous node in index order (zero at the ends)."""
    X = np.asarray(X, dtype=np.float64)
    fwd = np.zeros_like(X)
    rev = np.zeros_like(X)
    fwd[:-1] = _unit(X[1:] - X[:-1])
    rev[1:] = _unit(X[:-1] - X[1:])
    return np.stack([fwd, rev], axis=1)


# ---------------------------------------------------------------------------
# random transforms for the property harness
# ---------------------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_rotation(seed=None) -> np.ndarray:
    """Haar-random element of SO(3) via QR of a Gaussian matrix."""
    rng = _rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_reflection(seed=None) -> np.ndarray:
    """diag(-1, 1, 1) conjugated by a random rotation (det = -1)."""
    Q = random_rotation(seed)
    return Q @ np.diag([-1.0, 1.0, 1.0]) @ Q.T


def random_translation(scale: float = 1.0, seed=None) -> np.ndarray:
    return _rng(seed).normal(size=3) * scale


@dataclass
class GeoGraph:
    """A featurized 3D graph: positions, edges (i, j) and (scalar, vector) channels."""

    positions: np.ndarray
    edges: np.ndarray
    h: np.ndarray
    chi: np.ndarray
    e: np.ndarray
    xi: np.ndarray
    centroid: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = len(self.positions)
        if len(self.edges):
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise ParameterError("edge index out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ParameterError("self-loop edges are not allowed")
        self.h = np.asarray(self.h, dtype=np.float64).reshape(n, -1)
        self.chi = np.asarray(self.chi, dtype=np.float64).reshape(n, -1, 3)
        self.e = np.asarray(self.e, dtype=np.float64).reshape(len(self.edges), -1)
        self.xi = np.asarray(self.xi, dtype=np.float64).reshape(len(self.edges), -1, 3)

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def transformed(self, R: np.ndarray, t: np.ndarray | None = None) -> "GeoGraph":
        """Apply x -> R x + t to positions and R to every vector channel."""
        t = np.zeros(3) if t is None else np.asarray(t, dtype=np.float64)
        return GeoGraph(
            positions=self.positions @ R.T + t,
            edges=self.edges.copy(),
            h=self.h.copy(),
            chi=self.chi @ R.T,
            e=self.e.copy(),
            xi=self.xi @ R.T,
            meta=dict(self.meta),
        )

    def permuted(self, perm: np.ndarray) -> "GeoGraph":
        """Relabel nodes so that new node k is old node perm[k]."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return GeoGraph(
            positions=self.positions[perm],
            edges=inv[self.edges],
            h=self.h[perm],
            chi=self.chi[perm],
            e=self.e.copy(),
            xi=self.xi.copy(),
            meta=dict(self.meta),
        )
