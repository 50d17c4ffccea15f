"""Charged many-body simulation, dataset files and graph featurization.

Force on body i (unit masses)::

    F_i = sum_{j != i} c_i c_j (x_i - x_j) / (|x_i - x_j|^2 + eps^2)^(3/2)
          + c_i g            (G_ES)
          + c_i (v_i x B)    (L_ES)

integrated with kick-drift-kick leapfrog.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geomkit as gk

FIELD_KINDS = {"es": 0, "g_es": 1, "l_es": 2, "chiral": 3}
KIND_NAMES = {v: k for k, v in FIELD_KINDS.items()}

DT = 1e-3
SOFTENING = 0.1
POSITION_SCALE = 1.0
VELOCITY_SCALE = 0.5
N_RBF = 16
D_MAX = 10.0

MAGIC = b"GCPT"
VERSION = 1
_HEADER = struct.Struct("<4sIIdIII3d3d")


class SimulationError(FloatingPointError):
    pass


class DatasetError(ValueError):
    pass


@dataclass
class FieldSpec:
    kind: str = "es"
    gravity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    magnetic: np.ndarray = field(default_factory=lambda: np.zeros(3))
    softening: float = SOFTENING

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        self.gravity = np.asarray(self.gravity, dtype=np.float64)
        self.magnetic = np.asarray(self.magnetic, dtype=np.float64)
        if self.kind == "es" and (self.gravity.any() or self.magnetic.any()):
            raise ValueError("an ES field carries no gravity or magnetic component")

    @classmethod
    def named(cls, kind: str) -> "FieldSpec":
        """Default strengths: g = (0, 0, -1) for g_es, B = (0, 0, 1) for l_es."""
        kind = kind.lower().replace("+", "_")
        if kind == "g_es":
            return cls("g_es", gravity=np.array([0.0, 0.0, -1.0]))
        if kind == "l_es":
            return cls("l_es", magnetic=np.array([0.0, 0.0, 1.0]))
        return cls(kind)


@dataclass
class Trajectory:
    charges: np.ndarray
    positions: np.ndarray  # T x N x 3
    velocities: np.ndarray  # T x N x 3
    dt: float
    field: FieldSpec

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0]

    @property
    def n_bodies(self) -> int:
        return self.positions.shape[1]


def forces(x: np.ndarray, v: np.ndarray, charges: np.ndarray, fld: FieldSpec) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    r2 = np.sum(diff * diff, axis=-1) + fld.softening**2
    inv = r2 ** -1.5
    np.fill_diagonal(inv, 0.0)
    cc = charges[:, None] * charges[None, :]
    f = np.sum((cc * inv)[:, :, None] * diff, axis=1)
    if fld.kind == "g_es":
        f = f + charges[:, None] * fld.gravity
    elif fld.kind == "l_es":
        f = f + charges[:, None] * np.cross(v, fld.magnetic)
    return f


def step(x: np.ndarray, v: np.ndarray, charges: np.ndarray, fld: FieldSpec, dt: float = DT):
    """One kick-drift-kick step; returns new (x, v)."""
    v_half = v + 0.5 * dt * forces(x, v, charges, fld)
    x_new = x + dt * v_half
    v_new = v_half + 0.5 * dt * forces(x_new, v_half, charges, fld)
    return x_new, v_new


def simulate(x0: np.ndarray, v0: np.ndarray, charges: np.ndarray, fld: FieldSpec,
             n_steps: int, dt: float = DT) -> Trajectory:
    """Record ``n_steps`` states starting with the initial one."""
    if n_steps < 2:
        raise ValueError("a trajectory needs at least 2 recorded steps")
    n = len(x0)
    pos = np.empty((n_steps, n, 3))
    vel = np.empty((n_steps, n, 3))
    x, v = np.array(x0, dtype=np.float64), np.array(v0, dtype=np.float64)
    charges = np.asarray(charges, dtype=np.float64)
    pos[0], vel[0] = x, v
    for k in range(1, n_steps):
        x, v = step(x, v, charges, fld, dt)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise SimulationError(f"non-finite state at step {k}")
        pos[k], vel[k] = x, v
    return Trajectory(charges, pos, vel, dt, fld)


def random_initial_state(rng: np.random.Generator, n_bodies: int):
    x0 = rng.normal(size=(n_bodies, 3)) * POSITION_SCALE
    v0 = rng.normal(size=(n_bodies, 3)) * VELOCITY_SCALE
    charges = rng.choice([-1.0, 1.0], size=n_bodies)
    return x0, v0, charges


def generate_trajectories(n_traj: int, n_bodies: int, n_steps: int, fld: FieldSpec,
                          seed: int, dt: float = DT) -> list[Trajectory]:
    if min(n_traj, n_bodies, n_steps) <= 0 or dt <= 0:
        raise ValueError("trajectory count, body count, steps and dt must be positive")
    streams = np.random.SeedSequence(seed).spawn(n_traj)
    out = []
    for ss in streams:
        x0, v0, c = random_initial_state(np.random.default_rng(ss), n_bodies)
        out.append(simulate(x0, v0, c, fld, n_steps, dt))
    return out


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def encode_dataset(trajs: list[Trajectory], labels: np.ndarray | None = None) -> bytes:
    if not trajs:
        raise DatasetError("no trajectories to write")
    t0 = trajs[0]
    kind = FIELD_KINDS[t0.field.kind]
    parts = [_HEADER.pack(MAGIC, VERSION, kind, t0.dt, len(trajs), t0.n_bodies, t0.n_steps,
                          *t0.field.gravity, *t0.field.magnetic)]
    for k, tr in enumerate(trajs):
        if tr.positions.shape != t0.positions.shape:
            raise DatasetError("all trajectories in a file must share shape")
        parts.append(np.ascontiguousarray(tr.charges, "<f8").tobytes())
        parts.append(np.ascontiguousarray(tr.positions, "<f8").tobytes())
        parts.append(np.ascontiguousarray(tr.velocities, "<f8").tobytes())
        if kind == FIELD_KINDS["chiral"]:
            parts.append(struct.pack("<B", int(labels[k])))
    return b"".join(parts)


def decode_dataset(buf: bytes) -> tuple[list[Trajectory], np.ndarray | None]:
    if len(buf) < _HEADER.size:
        raise DatasetError("file too short for a dataset header")
    magic, version, kind, dt, n_traj, n, T, *gb = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DatasetError("bad magic, not a trajectory dataset")
    if version != VERSION:
        raise DatasetError(f"unsupported dataset version {version}")
    if kind not in KIND_NAMES:
        raise DatasetError(f"unknown field kind code {kind}")
    chiral = KIND_NAMES[kind] == "chiral"
    per = 8 * (n + 2 * T * n * 3) + (1 if chiral else 0)
    if len(buf) != _HEADER.size + n_traj * per:
        raise DatasetError(f"dataset length {len(buf)} does not match header ({n_traj} x {per} bytes)")
    fld = FieldSpec(KIND_NAMES[kind], np.array(gb[:3]), np.array(gb[3:]))
    trajs, labels = [], []
    off = _HEADER.size
    for _ in range(n_traj):
        c = np.frombuffer(buf, "<f8", n, off).astype(np.float64)
        off += 8 * n
        pos = np.frombuffer(buf, "<f8", T * n * 3, off).reshape(T, n, 3).astype(np.float64)
        off += 8 * T * n * 3
        vel = np.frombuffer(buf, "<f8", T * n * 3, off).reshape(T, n, 3).astype(np.float64)
        off += 8 * T * n * 3
        if chiral:
            labels.append(buf[off])
            off += 1
        trajs.append(Trajectory(c, pos, vel, dt, fld))
    return trajs, (np.array(labels, dtype=np.int64) if chiral else None)


def write_dataset(path, trajs, labels=None) -> None:
    path = Path(path)
    try:
        path.write_bytes(encode_dataset(trajs, labels))
    except OSError as exc:
        raise OSError(f"cannot write dataset {path}: {exc}") from exc


def read_dataset(path):
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    return decode_dataset(buf)


def generate_dataset(n_traj: int, n_bodies: int, n_steps: int, dt: float, fld: FieldSpec,
                     seed: int, out) -> list[Trajectory]:
    trajs = generate_trajectories(n_traj, n_bodies, n_steps, fld, seed, dt)
    write_dataset(out, trajs)
    return trajs


# ---------------------------------------------------------------------------
# featurization
# ---------------------------------------------------------------------------

def featurize_nms(traj: Trajectory, t0: int = 0, horizon: int | None = None):
    """Graph at step t0 and target positions at t0 + horizon (default: last step)."""
    if horizon is None:
        horizon = traj.n_steps - 1 - t0
    if horizon < 1 or t0 < 0 or t0 + horizon >= traj.n_steps:
        raise ValueError(f"horizon {horizon} from t0={t0} leaves the {traj.n_steps}-step trajectory")
    X = traj.positions[t0]
    v = traj.velocities[t0]
    n = traj.n_bodies
    edges = gk.full_graph(n)
    dist = np.linalg.norm(X[edges[:, 0]] - X[edges[:, 1]], axis=1)
    charge_prod = traj.charges[edges[:, 0]] * traj.charges[edges[:, 1]]
    graph = gk.GeoGraph(
        positions=X,
        edges=edges,
        h=np.linalg.norm(v, axis=1)[:, None],
        chi=np.concatenate([v[:, None, :], gk.orientation_vectors(X)], axis=1),
        e=np.concatenate([gk.rbf_encode(dist, N_RBF, D_MAX), charge_prod[:, None]], axis=1),
        xi=gk.unit_displacement(X, edges)[:, None, :],
        meta={"velocities": v, "horizon_time": horizon * traj.dt},
    )
    return graph, traj.positions[t0 + horizon]


def inertial_baseline(traj: Trajectory, t0: int = 0, horizon: int | None = None) -> np.ndarray:
    """x + v * horizon_time, the constant-velocity forecast."""
    if horizon is None:
        horizon = traj.n_steps - 1 - t0
    return traj.positions[t0] + traj.velocities[t0] * horizon * traj.dt


def total_momentum(traj: Trajectory) -> np.ndarray:
    """Per-step total momentum (unit masses), T x 3."""
    return traj.velocities.sum(axis=1)


def total_energy(traj: Trajectory) -> np.ndarray:
    """Kinetic plus softened pair potential per step (ES part only)."""
    ke = 0.5 * np.sum(traj.velocities**2, axis=(1, 2))
    diff = traj.positions[:, :, None, :] - traj.positions[:, None, :, :]
    r = np.sqrt(np.sum(diff**2, axis=-1) + traj.field.softening**2)
    cc = traj.charges[:, None] * traj.charges[None, :]
    iu = np.triu_indices(traj.n_bodies, 1)
    pe = np.sum((cc / r)[:, iu[0], iu[1]], axis=1)
    return ke + pe
