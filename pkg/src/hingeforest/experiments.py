"""Repeated-run protocols: rotated k-fold splits and seed sweeps."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path

from .build import load_splits
from .config import ExperimentConfig
from .serialize import load_model
from .train import EvalResult, evaluate, train


@dataclass
class RunOutcome:
    dataset_seed: int
    run_seed: int
    rotation: int
    best_step: int
    test: EvalResult


def run_once(config: ExperimentConfig, dataset_seed, run_seed, rotation=0, out_dir=None) -> RunOutcome:
    """Train one configuration and score the selected model on the test split."""
    cfg = copy.deepcopy(config)
    cfg.dataset.seed, cfg.run.seed, cfg.dataset.rotation = dataset_seed, run_seed, rotation
    if out_dir is not None:
        cfg.output.dir = str(out_dir)
    splits = load_splits(cfg)
    result = train(cfg, splits=splits, quiet=True)
    graph, _ = load_model(result.best_model)
    return RunOutcome(dataset_seed, run_seed, rotation, result.best_step,
                      evaluate(graph, splits["test"], cfg.run.eval_batch_size))


def rotated_folds(config: ExperimentConfig, shuffles=5, folds=3, out_root=None):
    """``shuffles`` random permutations, each used ``folds`` times with the
    train/validation/test roles rotated over the folds."""
    out = []
    for s in range(1, shuffles + 1):
        for r in range(folds):
            where = None if out_root is None else Path(out_root) / f"shuffle{s}_fold{r}"
            out.append(run_once(config, s, s, r, where))
    return out


def seed_sweep(config: ExperimentConfig, seeds=(1, 2, 3, 4, 5), out_root=None):
    """One run per seed; the seed drives both the data split and the weights."""
    return [run_once(config, s, s, 0, None if out_root is None else Path(out_root) / f"seed{s}")
            for s in seeds]


def data_root(default: Path) -> Path:
    """Directory holding downloaded datasets (``$HINGEFOREST_DATA`` wins)."""
    env = os.environ.get("HINGEFOREST_DATA")
    return Path(env) if env else Path(default)
