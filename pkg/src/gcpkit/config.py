"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .gcp import ConfigError
from .model import ModelConfig

TASKS = ("nms", "chiral")


@dataclass
class RunConfig:
    task: str = "nms"
    # model
    num_layers: int = 4
    message_depth: int = 8
    ffn_depth: int = 1
    node_scalar_hidden: int = 32
    node_vector_hidden: int = 16
    edge_scalar_hidden: int = 16
    edge_vector_hidden: int = 4
    downscale: int = 3
    dropout: float = 0.1
    dense_dropout: float = 0.1
    aggregation: str = "mean"
    update_positions: bool = True
    ablate_frames: bool = False
    ablate_resgcp: bool = False
    ablate_scalars: bool = False
    ablate_vectors: bool = False
    # optimizer
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # schedule
    epochs: int = 100
    min_epochs: int = 0
    max_epochs: int = 12000
    batch_size: int = 32
    seed: int = 0
    # nms target: -1 means the last recorded step
    t0: int = 0
    horizon: int = -1
    # data
    train_data: str = ""
    val_data: str = ""
    test_data: str = ""
    out_dir: str = "run"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.task == "chiral" and self.update_positions:
            raise ConfigError("the chiral task is a graph classification task; set update_positions = false")
        if self.task == "nms" and not self.update_positions:
            raise ConfigError("the nms task predicts positions; update_positions must be true")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.min_epochs > self.max_epochs:
            raise ConfigError("min_epochs exceeds max_epochs")

    @property
    def n_epochs(self) -> int:
        if self.epochs == 0:
            return 0
        return min(max(self.epochs, self.min_epochs), self.max_epochs)

    def model_config(self) -> ModelConfig:
        if self.task == "nms":
            node_in, edge_in, head = (1, 3), (17, 1), "node_positions"
        else:
            node_in, edge_in, head = (5, 2), (16, 1), "graph_class"
        return ModelConfig(
            node_in=node_in, edge_in=edge_in,
            node_hidden=(self.node_scalar_hidden, self.node_vector_hidden),
            edge_hidden=(self.edge_scalar_hidden, self.edge_vector_hidden),
            num_layers=self.num_layers, message_depth=self.message_depth, ffn_depth=self.ffn_depth,
            downscale=self.downscale, dropout=self.dropout, dense_dropout=self.dense_dropout,
            aggregation=self.aggregation, head=head, n_classes=2,
            ablate_frames=self.ablate_frames, ablate_resgcp=self.ablate_resgcp,
            ablate_scalars=self.ablate_scalars, ablate_vectors=self.ablate_vectors,
        )

    # -- text form --------------------------------------------------------

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val, type(getattr(cls, key)) if hasattr(cls, key) else str)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        cfg = cls.loads(Path(path).read_text())
        env_seed = os.environ.get("GCPN_SEED")
        if env_seed:
            cfg.seed = int(env_seed)
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def _coerce(key: str, val: str, typ):
    try:
        if typ is bool:
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if typ is int:
            return int(val)
        if typ is float:
            return float(val)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {val!r} as {typ.__name__}") from None
    return val
