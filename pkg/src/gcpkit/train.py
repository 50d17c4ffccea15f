"""Training and evaluation loops shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chiral as ch
from . import diffcore as dc
from . import evalkit as ek
from . import nbody as nb
from .config import RunConfig
from .diffcore import NumericError
from .model import GCPNet, GraphBatch, loss

log = logging.getLogger(__name__)

CHECKPOINT = "best.ckpt"
METRICS = "metrics.log"
CONFIG = "config.txt"


@dataclass
class Dataset:
    graphs: list
    targets: np.ndarray
    baseline: np.ndarray | None = None  # inertial forecast, nms only

    def __len__(self) -> int:
        return len(self.graphs)

    def batch(self, idx) -> tuple[GraphBatch, np.ndarray]:
        idx = np.asarray(idx)
        b = GraphBatch.from_graphs([self.graphs[k] for k in idx])
        return b, (np.concatenate(self.targets[idx]) if self.targets.ndim == 3 else self.targets[idx])


def nms_dataset(trajs: list[nb.Trajectory], t0: int = 0, horizon: int = -1) -> Dataset:
    h = None if horizon < 0 else horizon
    graphs, targets, base = [], [], []
    for tr in trajs:
        g, y = nb.featurize_nms(tr, t0, h)
        graphs.append(g)
        targets.append(y)
        base.append(nb.inertial_baseline(tr, t0, h))
    return Dataset(graphs, np.stack(targets), np.stack(base))


def chiral_dataset(samples: list[ch.ChiralSample]) -> Dataset:
    pairs = [ch.featurize_chiral(s) for s in samples]
    return Dataset([g for g, _ in pairs], np.array([y for _, y in pairs], dtype=np.int64))


def load_dataset(cfg: RunConfig, path) -> Dataset:
    if not path or not Path(path).exists():
        raise FileNotFoundError(f"dataset file not found: {path!r}")
    if cfg.task == "chiral":
        return chiral_dataset(ch.read_chiral(path))
    trajs, _ = nb.read_dataset(path)
    return nms_dataset(trajs, cfg.t0, cfg.horizon)


def predict(model: GCPNet, data: Dataset, batch_size: int = 256) -> np.ndarray:
    outs = []
    for start in range(0, len(data), batch_size):
        b, _ = data.batch(np.arange(start, min(start + batch_size, len(data))))
        out = model(b)
        if out.class_logits is not None:
            outs.append(out.class_logits.data)
        elif out.node_positions is not None:
            outs.append(out.node_positions.data.reshape(b.n_graphs, -1, 3))
        else:
            outs.append(out.graph_scalar.data)
    return np.concatenate(outs)


def evaluate_loss(model: GCPNet, data: Dataset, batch_size: int = 256) -> float:
    total = 0.0
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        b, y = data.batch(idx)
        total += loss(model(b), y).item() * len(idx)
    return total / len(data)


def evaluate(model: GCPNet, data: Dataset) -> ek.MetricReport:
    pred = predict(model, data)
    if model.cfg.head == "graph_class":
        rep = ek.classification_report(pred, data.targets)
        rep.metrics["cross_entropy"] = evaluate_loss(model, data)
        return rep
    rep = ek.regression_report(pred.reshape(-1, 3), data.targets.reshape(-1, 3))
    rep.n = len(data)
    if data.baseline is not None:
        rep.metrics["baseline_mse"] = ek.mse(data.baseline, data.targets)
    return rep


def train(cfg: RunConfig, train_data: Dataset, val_data: Dataset, out_dir=None,
          model: GCPNet | None = None) -> tuple[GCPNet, list[str]]:
    """Fixed-epoch training; keeps the best-validation parameters.

    Returns the model loaded with the best parameters and the metric lines.
    When ``out_dir`` is given, the best checkpoint, the config and the metric
    log are written there.
    """
    model = model or GCPNet(cfg.model_config(), seed=cfg.seed)
    store = model.store
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / CONFIG)
        (out / METRICS).write_text("")
        dc.save_checkpoint(store, out / CHECKPOINT)

    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    best_val = np.inf
    best_state = store.state()
    lines: list[str] = []
    n = len(train_data)
    for epoch in range(1, cfg.n_epochs + 1):
        order = shuffle_rng.permutation(n)
        running, seen = 0.0, 0
        for step, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            b, y = train_data.batch(idx)
            value = loss(model.forward(b, training=True, rng=dropout_rng), y)
            if not np.isfinite(value.item()):
                raise NumericError(f"non-finite training loss at epoch {epoch}, step {step}")
            dc.backward(value)
            dc.adam_step(store, cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps)
            running += value.item() * len(idx)
            seen += len(idx)
        val = evaluate_loss(model, val_data)
        line = f"epoch={epoch} train_loss={running / seen:.10g} val_loss={val:.10g}"
        if cfg.task == "chiral":
            line += f" val_accuracy={evaluate(model, val_data).metrics['accuracy']:.6g}"
        lines.append(line)
        log.info(line)
        if val < best_val:
            best_val = val
            best_state = store.state()
            if out is not None:
                dc.save_checkpoint(store, out / CHECKPOINT)
        if out is not None:
            with open(out / METRICS, "a") as fh:
                fh.write(line + "\n")
    store.load_state(best_state)
    return model, lines


def load_model(cfg: RunConfig, checkpoint) -> GCPNet:
    model = GCPNet(cfg.model_config(), seed=cfg.seed)
    model.store.load_state(dc.load_checkpoint(checkpoint))
    return model
