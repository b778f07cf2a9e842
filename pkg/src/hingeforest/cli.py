"""Command line entry point: ``hingeforest train|eval|gradcheck``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .build import load_splits
from .config import parse_config
from .errors import HingeForestError
from .gradcheck import gradcheck_config
from .serialize import load_model
from .train import check_compatible, dataset_from_model_meta, evaluate, train

log = logging.getLogger("hingeforest")


def _overrides(args):
    out = {}
    if getattr(args, "seed", None) is not None:
        out.setdefault("run", {})["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        out.setdefault("output", {})["dir"] = str(Path(args.out_dir).resolve())
    if getattr(args, "steps", None) is not None:
        out.setdefault("run", {})["max_steps"] = args.steps
    if getattr(args, "backend", None) is not None:
        out.setdefault("run", {})["backend"] = args.backend
    return out


def cmd_train(args):
    config = parse_config(args.config, overrides=_overrides(args))
    print(config.dump(), end="", flush=True)
    result = train(config, resume=args.resume)
    print(f"final model: {result.final_model}")
    print(f"best model: {result.best_model} (step {result.best_step}, "
          f"{config.run.selection} error {result.best_error:.6g})")
    print(f"metrics: {result.metrics_path}")
    return 0


def cmd_eval(args):
    graph, meta = load_model(args.model)
    dataset = Path(args.dataset)
    if dataset.suffix in (".yaml", ".yml"):
        split = load_splits(parse_config(dataset)).get(args.split)
        if split is None:
            raise HingeForestError(f"config defines no '{args.split}' split")
    else:
        split = dataset_from_model_meta(meta, dataset, args.labels, tag=args.split)
    check_compatible(graph, meta, split)
    res = evaluate(graph, split, args.batch_size)
    line = f"split={split.tag}\tn={res.count}\tloss={res.loss:.6g}\terror={res.error:.6g}"
    if res.r2 is not None:
        line += f"\tr2={res.r2:.6g}"
    print(line)
    return 0


def cmd_gradcheck(args):
    config = parse_config(args.config, overrides=_overrides(args))
    report = gradcheck_config(config, samples=args.samples, h=args.step, seed=args.seed or 0)
    print(report.summary())
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="hingeforest", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--steps", type=int, help="override run.max_steps")
    p.add_argument("--backend", choices=["numpy", "compiled"])
    p.add_argument("--resume", help="continue from a saved model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("model")
    p.add_argument("dataset", help="data file (csv, or IDX images with --labels) or a config")
    p.add_argument("--split", default="test", choices=["train", "validation", "test"])
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--batch-size", type=int, default=1000)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--step", type=float, default=1e-3, help="finite difference step h")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except HingeForestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
