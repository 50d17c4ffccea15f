"""Synthetic left/right-handed point clouds.

Each sample is a center atom with four arms along (jittered) tetrahedral
directions at radii 1.0, 1.5, 2.0 and 2.5. Ordering the arms by radius, the
sign of det[p1 - p0, p2 - p0, p3 - p0] is the handedness: positive is R
(label 1), negative is S (label 0). Every base sample is paired with its
mirror image, so the classes are exactly balanced and each sample's mirror
has identical distances.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geomkit as gk
from . import nbody as nb

ARM_RADII = np.array([1.0, 1.5, 2.0, 2.5])
TETRAHEDRON = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64) / np.sqrt(3.0)
LABEL_R, LABEL_S = 1, 0
N_RBF = 16
D_MAX = 20.0
JITTER = 0.15
POSE_TRANSLATION = 5.0


@dataclass
class ChiralSample:
    positions: np.ndarray  # 5 x 3: center, then arms sorted by radius
    label: int

    def mirrored(self) -> "ChiralSample":
        return ChiralSample(-self.positions, 1 - self.label)


def handedness(positions: np.ndarray) -> int:
    """R/S label from the determinant of the three shortest arms."""
    p = np.asarray(positions, dtype=np.float64)
    arms = p[1:] - p[0]
    order = np.argsort(np.linalg.norm(arms, axis=1), kind="stable")
    d = np.linalg.det(arms[order[:3]])
    return LABEL_R if d > 0 else LABEL_S


def _base_sample(rng: np.random.Generator) -> np.ndarray:
    dirs = TETRAHEDRON[rng.permutation(4)] + rng.normal(scale=JITTER, size=(4, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.vstack([np.zeros(3), dirs * ARM_RADII[:, None]])


def generate_chiral(n_samples: int, seed: int) -> list[ChiralSample]:
    if n_samples <= 0 or n_samples % 2:
        raise ValueError(f"n_samples must be a positive even number, got {n_samples}")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n_samples // 2):
        base = _base_sample(rng)
        for pts in (base, -base):
            Q = gk.random_rotation(rng)
            t = gk.random_translation(POSE_TRANSLATION, rng)
            posed = pts @ Q.T + t
            samples.append(ChiralSample(posed, handedness(posed)))
    order = rng.permutation(len(samples))
    return [samples[k] for k in order]


def featurize_chiral(sample: ChiralSample) -> tuple[gk.GeoGraph, int]:
    X = sample.positions
    edges = gk.full_graph(len(X))
    dist = np.linalg.norm(X[edges[:, 0]] - X[edges[:, 1]], axis=1)
    graph = gk.GeoGraph(
        positions=X,
        edges=edges,
        h=np.eye(len(X)),
        chi=gk.orientation_vectors(X),
        e=gk.rbf_encode(dist, N_RBF, D_MAX),
        xi=gk.unit_displacement(X, edges)[:, None, :],
    )
    return graph, sample.label


def to_trajectories(samples: list[ChiralSample]) -> tuple[list[nb.Trajectory], np.ndarray]:
    fld = nb.FieldSpec("chiral")
    trajs = [
        nb.Trajectory(np.zeros(len(s.positions)), s.positions[None], np.zeros((1,) + s.positions.shape), 0.0, fld)
        for s in samples
    ]
    return trajs, np.array([s.label for s in samples], dtype=np.int64)


def write_chiral(path, samples: list[ChiralSample]) -> None:
    trajs, labels = to_trajectories(samples)
    nb.write_dataset(path, trajs, labels)


def read_chiral(path) -> list[ChiralSample]:
    trajs, labels = nb.read_dataset(Path(path))
    if labels is None:
        raise nb.DatasetError(f"{path} is not a chirality dataset")
    return [ChiralSample(t.positions[0], int(l)) for t, l in zip(trajs, labels)]
