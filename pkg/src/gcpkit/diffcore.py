"""Dense float64 arrays with reverse-mode gradients.

A ``Tensor`` wraps a numpy array and records the operation that produced
it. Calling :func:`backward` on a scalar walks the recorded graph in reverse
topological order and accumulates ``grad`` on every tensor that asked for it.

Also here: the parameter store, the adaptive-moment optimizer and the
binary checkpoint format.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

DTYPE = np.float64

_DEBUG = False


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class ContractError(RuntimeError):
    """A precondition of an operation was violated."""


class NumericError(FloatingPointError):
    """A non-finite value showed up where finite values are required."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed."""


def set_debug(enabled: bool) -> None:
    """Toggle NaN/Inf checks on every operation output."""
    global _DEBUG
    _DEBUG = bool(enabled)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise NumericError("non-finite value produced by an operation")
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), bw)


def power(a: Tensor, p: float) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        _accum(a, g * p * a.data ** (p - 1))

    return _make(a.data**p, (a,), bw)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), bw)


def log(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * 0.5 / out_data)

    return _make(out_data, (a,), bw)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def bw(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), bw)


def smooth_gate(a: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = _sigmoid(a.data)

    def bw(g):
        _accum(a, g * (s + a.data * s * (1.0 - s)))

    return _make(a.data * s, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)

    return _make(np.where(mask, a.data, 0.0), (a,), bw)


# ---------------------------------------------------------------------------
# reductions and shape
# ---------------------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis, keepdims) * (1.0 / max(n, 1))


def reshape(a: Tensor, shape) -> Tensor:
    def bw(g):
        _accum(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), bw)


def transpose(a: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)

    def bw(g):
        _accum(a, np.transpose(g, inv))

    return _make(np.transpose(a.data, axes), (a,), bw)


def getitem(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _accum(a, full)

    return _make(a.data[idx], (a,), bw)


def gather(a: Tensor, index: np.ndarray) -> Tensor:
    """Rows of ``a`` picked by an integer index array (axis 0)."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ContractError(f"gather index out of range for {a.shape[0]} rows")
    return getitem(a, index)


def segment_sum(a: Tensor, index: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``n_segments`` buckets given by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((n_segments,) + a.shape[1:], dtype=DTYPE)
    np.add.at(out, index, a.data)

    def bw(g):
        _accum(a, g[index])

    return _make(out, (a,), bw)


def segment_mean(a: Tensor, index: np.ndarray, n_segments: int) -> Tensor:
    """Mean of rows per bucket; empty buckets give zeros."""
    counts = np.bincount(np.asarray(index, dtype=np.int64), minlength=n_segments)
    inv = 1.0 / np.maximum(counts, 1).astype(DTYPE)
    inv = inv.reshape((n_segments,) + (1,) * (a.ndim - 1))
    return segment_sum(a, index, n_segments) * inv


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def norm(a: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; gradient taken as zero where the norm is zero."""
    n = np.sqrt(np.sum(a.data * a.data, axis=axis))

    def bw(g):
        nz = np.expand_dims(n, axis)
        safe = np.where(nz > 0, nz, 1.0)
        _accum(a, np.expand_dims(g, axis) * np.where(nz > 0, a.data / safe, 0.0))

    return _make(n, (a,), bw)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), bw)


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum. Every index of an operand must appear in the
    output or in the other operand (no private contractions)."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out_sub = subscripts.replace(" ", "").split("->")
    a_sub, b_sub = ins.split(",")
    for own, other in ((a_sub, b_sub), (b_sub, a_sub)):
        if any(c not in out_sub and c not in other for c in own):
            raise ContractError(f"unsupported einsum pattern {subscripts!r}")

    def bw(g):
        if a.requires_grad:
            _accum(a, np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, b.data, optimize=True))
        if b.requires_grad:
            _accum(b, np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, a.data, optimize=True))

    return _make(np.einsum(subscripts, a.data, b.data, optimize=True), (a, b), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        _accum(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out, (a,), bw)


# ---------------------------------------------------------------------------
# graph traversal
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable requires_grad tensor, then drop the graph."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires grad")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._parents:
            # interior nodes: release graph and temporary grads
            node._parents = ()
            node._backward = None
            node.grad = None


# ---------------------------------------------------------------------------
# parameters and optimizer
# ---------------------------------------------------------------------------

class ParamStore:
    """Ordered name -> parameter mapping plus optimizer state."""

    def __init__(self, seed: int = 0):
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.step = 0
        self.moments: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        self.rng = np.random.default_rng(seed)

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __len__(self) -> int:
        return len(self.params)

    def __iter__(self):
        return iter(self.params.items())

    def names(self) -> list[str]:
        return list(self.params)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def weight(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        return self.add(name, self.rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def bias(self, name: str, n: int) -> Tensor:
        return self.add(name, np.zeros(n))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = set(self.params) - set(state)
            extra = set(state) - set(self.params)
            raise DimensionError(f"parameter names differ (missing={sorted(missing)}, extra={sorted(extra)})")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise DimensionError(f"{k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=DTYPE)

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))


def adam_step(store: ParamStore, lr: float, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8, allow_missing: bool = True) -> None:
    """One bias-corrected adaptive-moment update, then grads are cleared.

    Parameters without a gradient (not reached by the loss) are treated as
    having zero gradient unless ``allow_missing`` is False.
    """
    b1, b2 = betas
    if not allow_missing:
        missing = [k for k, t in store.params.items() if t.grad is None]
        if missing:
            raise ContractError(f"no gradient for parameters: {missing[:5]}")
    store.step += 1
    c1 = 1.0 - b1**store.step
    c2 = 1.0 - b2**store.step
    for name, p in store.params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m, v = store.moments.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        store.moments[name] = (m, v)
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.grad = None


# ---------------------------------------------------------------------------
# checkpoint file
# ---------------------------------------------------------------------------

MAGIC = b"GCPK"
VERSION = 1


def encode_checkpoint(state: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError("bad magic, not a checkpoint file")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise CheckpointError("truncated parameter name")
            off += n
            (ndim,) = struct.unpack_from("<I", buf, off)
            off += 4
            dims = struct.unpack_from(f"<{ndim}Q", buf, off)
            off += 8 * ndim
            size = int(np.prod(dims)) if ndim else 1
            if off + 8 * size > len(buf):
                raise CheckpointError(f"truncated data for {name!r}")
            out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=off).reshape(dims).astype(DTYPE)
            off += 8 * size
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if off != len(buf):
        raise CheckpointError(f"checkpoint length mismatch: parsed {off} of {len(buf)} bytes")
    return out


def save_checkpoint(store: ParamStore, path: str | Path) -> None:
    Path(path).write_bytes(encode_checkpoint(store.state()))


def load_checkpoint(path: str | Path) -> "OrderedDict[str, np.ndarray]":
    return decode_checkpoint(Path(path).read_bytes())

