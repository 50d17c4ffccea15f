"""Command line: ``gcpkit generate | generate-chiral | train | eval | check``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import chiral as ch
from . import nbody as nb
from .config import RunConfig
from .evalkit import check_model
from .model import GCPNet
from .train import CHECKPOINT, CONFIG, evaluate, load_dataset, load_model, train

log = logging.getLogger("gcpkit")


def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_generate(args) -> int:
    fld = nb.FieldSpec.named(args.field)
    nb.generate_dataset(args.traj, args.bodies, args.steps, args.dt, fld, args.seed, args.out)
    print(f"wrote {args.out} sha256={_sha(args.out)}")
    return 0


def cmd_generate_chiral(args) -> int:
    ch.write_chiral(args.out, ch.generate_chiral(args.n, args.seed))
    print(f"wrote {args.out} sha256={_sha(args.out)}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    train_data = load_dataset(cfg, cfg.train_data)
    val_data = load_dataset(cfg, cfg.val_data)
    _, lines = train(cfg, train_data, val_data, cfg.out_dir)
    for line in lines:
        print(line)
    print(f"checkpoint={Path(cfg.out_dir) / CHECKPOINT}")
    return 0


def _config_for(checkpoint, config) -> RunConfig:
    path = Path(config) if config else Path(checkpoint).parent / CONFIG
    return RunConfig.load(path)


def cmd_eval(args) -> int:
    cfg = _config_for(args.checkpoint, args.config)
    model = load_model(cfg, args.checkpoint)
    rep = evaluate(model, load_dataset(cfg, args.dataset))
    for line in rep.lines():
        print(line)
    if args.report:
        Path(args.report).write_text(rep.to_json())
    return 0


def cmd_check(args) -> int:
    if args.checkpoint:
        cfg = _config_for(args.checkpoint, args.config)
        model = load_model(cfg, args.checkpoint)
    else:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        model = GCPNet(cfg.model_config(), seed=cfg.seed)
    rep = check_model(model, n_trials=args.trials, seed=args.seed)
    for line in rep.lines():
        print(line)
    ok = rep.passed(args.tol)
    print(f"passed={str(ok).lower()} tol={args.tol:g}")
    if args.report:
        Path(args.report).write_text(json.dumps({**json.loads(rep.to_json()), "passed": ok, "tol": args.tol}))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcpkit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a many-body trajectory dataset")
    g.add_argument("--field", choices=["es", "g_es", "l_es"], default="es")
    g.add_argument("--bodies", type=int, default=5)
    g.add_argument("--traj", type=int, default=7000)
    g.add_argument("--steps", type=int, default=1000)
    g.add_argument("--dt", type=float, default=nb.DT)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("generate-chiral", help="write a synthetic chirality dataset")
    c.add_argument("--n", type=int, default=10000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_generate_chiral)

    t = sub.add_parser("train", help="train from a run config")
    t.add_argument("config")
    t.add_argument("--out-dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--config", help="run config (default: config.txt next to the checkpoint)")
    e.add_argument("--report", help="also write the report as JSON")
    e.set_defaults(func=cmd_eval)

    k = sub.add_parser("check", help="symmetry property checks")
    k.add_argument("checkpoint", nargs="?", help="omit for a freshly initialized model")
    k.add_argument("--config")
    k.add_argument("--trials", type=int, default=100)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--tol", type=float, default=1e-6)
    k.add_argument("--report")
    k.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
