"""Training loop, evaluation and metrics logging."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_io
from .build import DataInfo, build_graph, data_info, load_splits
from .config import ExperimentConfig
from .errors import ConfigurationError, NumericalFault
from .graph import Graph
from .optim import make_optimizer
from .serialize import load_model, save_model

log = logging.getLogger(__name__)

METRICS_HEADER = "step\tsplit\tloss\terror\n"


@dataclass
class EvalResult:
    loss: float
    error: float           # misclassification rate, or 1 - R^2 for regression
    count: int
    r2: float | None = None


@dataclass
class TrainResult:
    final_model: Path
    best_model: Path
    metrics_path: Path
    best_step: int
    best_error: float
    history: list = field(default_factory=list)   # (step, split, loss, error)
    graph: Graph | None = None


def r_squared(pred, target) -> float:
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    ss_res = float(np.sum((target - pred) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def error_rate(pred, labels) -> float:
    return float(np.mean(np.argmax(pred, axis=1) != np.asarray(labels)))


def _score(task, pred, labels):
    if task == data_io.REGRESSION:
        r2 = r_squared(pred, labels)
        return 1.0 - r2, r2
    return error_rate(pred, labels), None


def evaluate(graph: Graph, split: data_io.DatasetSplit, batch_size=1000) -> EvalResult:
    """Loss and error of ``graph`` over a whole split in inference mode."""
    was_training = graph.training
    graph.eval()
    total, preds = 0.0, []
    try:
        for start in range(0, len(split), batch_size):
            x = split.features[start:start + batch_size]
            y = split.labels[start:start + batch_size]
            total += graph.run_forward(x, y) * len(y)
            preds.append(np.array(graph[graph.output_name].output, dtype=np.float64))
    finally:
        graph.train(was_training)
    pred = np.concatenate(preds)
    err, r2 = _score(split.task, pred, split.labels)
    return EvalResult(total / len(split), err, len(split), r2)


def _fmt(step, split, loss, err):
    return f"{step}\t{split}\t{loss:.9g}\t{err:.9g}\n"


def _metadata(config, info, step, stream, best_error, best_step):
    return {"config": config.to_dict(), "task": info.task, "classes": info.classes,
            "feature_shape": list(info.feature_shape), "num_outputs": info.num_outputs,
            "step": step, "batch_stream": stream.state(),
            "best_error": best_error, "best_step": best_step}


def train(config: ExperimentConfig, splits=None, resume=None, quiet=False) -> TrainResult:
    """Run ``run.max_steps`` optimizer steps and write models plus metrics.

    Every ``run.eval_interval`` steps (and at step 0 and the last step) the
    mean training loss/error since the previous evaluation is logged along
    with loss/error on the validation and test splits.  The model with the
    lowest error on the ``run.selection`` split is saved as the best model;
    test data never affects training unless ``selection`` is ``test``.
    """
    run, opt_spec = config.run, config.optimizer
    splits = splits if splits is not None else load_splits(config)
    if run.selection not in splits:
        raise ConfigurationError(f"run.selection is '{run.selection}' but no such split exists")
    info = data_info(config, splits)
    optimizer = make_optimizer(opt_spec.name, opt_spec.learning_rate, opt_spec.beta1,
                               opt_spec.beta2, opt_spec.weight_decay, opt_spec.epsilon)
    stream = data_io.BatchStream(splits["train"], run.batch_size,
                                 np.random.default_rng([run.seed, 0xBA7C4]))
    out = Path(config.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / config.output.metrics
    final_path, best_path = out / config.output.model, out / config.output.best_model
    step, best_error, best_step = 0, np.inf, -1
    if resume is not None:
        graph, meta = load_model(resume, optimizer)
        if run.backend:
            from .forest import get_backend
            graph["forest"].backend = get_backend(run.backend)
        step = int(meta["step"])
        stream.restore(meta["batch_stream"])
        best_error = float(meta.get("best_error", np.inf))
        best_step = int(meta.get("best_step", -1))
        mode = "a"
    else:
        graph = build_graph(config, info)
        mode = "w"
    graph.train()
    history = []
    eval_roles = [r for r in ("validation", "test") if r in splits]

    def record(step_, split_, loss_, err_):
        history.append((step_, split_, loss_, err_))
        fh.write(_fmt(step_, split_, loss_, err_))

    def checkpoint():
        nonlocal best_error, best_step
        results = {}
        for role in eval_roles:
            res = evaluate(graph, splits[role], run.eval_batch_size)
            results[role] = res
            record(step, role, res.loss, res.error)
        sel = results[run.selection] if run.selection in results else None
        if sel is not None and sel.error < best_error:
            best_error, best_step = sel.error, step
            save_model(best_path, graph, _metadata(config, info, step, stream, best_error, best_step),
                       optimizer)
        if not quiet:
            log.info("step %d: %s", step, ", ".join(
                f"{r} loss {v.loss:.4f} error {v.error:.4f}" for r, v in results.items()))

    started = time.perf_counter()
    with open(metrics_path, mode) as fh:
        if mode == "w":
            fh.write(METRICS_HEADER)
            checkpoint()
        losses, preds, labels = [], [], []
        while step < run.max_steps:
            x, y = stream.next_batch()
            try:
                loss = graph.run_forward(x, y)
                losses.append((loss, len(y)))
                preds.append(np.array(graph[graph.output_name].output, dtype=np.float64))
                labels.append(y)
                graph.run_backward()
            except NumericalFault as exc:
                raise NumericalFault(exc.node, exc.phase, step + 1) from exc
            optimizer.step(graph.parameters())
            step += 1
            if step % run.eval_interval == 0 or step == run.max_steps:
                total = sum(l * n for l, n in losses) / sum(n for _, n in losses)
                err, _ = _score(info.task, np.concatenate(preds), np.concatenate(labels))
                record(step, "train", total, err)
                losses, preds, labels = [], [], []
                checkpoint()
    save_model(final_path, graph, _metadata(config, info, step, stream, best_error, best_step),
               optimizer)
    if best_step < 0:
        save_model(best_path, graph, _metadata(config, info, step, stream, best_error, step),
                   optimizer)
        best_step = step
    if not quiet:
        log.info("finished %d steps in %.1fs; best %s error %.4f at step %d", step,
                 time.perf_counter() - started, run.selection, best_error, best_step)
    return TrainResult(final_path, best_path, metrics_path, best_step, float(best_error),
                       history, graph)


def dataset_from_model_meta(meta, path, labels_path=None, tag="test"):
    """Load a data file with the same parsing options the model was trained with."""
    ds = meta["config"]["dataset"]
    if ds["format"] == "idx":
        if labels_path is None:
            raise ConfigurationError("IDX evaluation needs --labels")
        return data_io.load_idx(path, labels_path, tag=tag)
    return data_io.load_csv(path, ds["label_column"], ds["has_header"], ds["delimiter"],
                            ds["task"], ds["categorical_columns"], meta.get("classes") or None,
                            ds["label_bins"], tag=tag)


def check_compatible(graph: Graph, meta, split: data_io.DatasetSplit):
    expected = tuple(meta.get("feature_shape") or ())
    if expected and tuple(split.feature_shape) != expected:
        raise ConfigurationError(
            f"model expects features of shape {expected}, dataset has {tuple(split.feature_shape)}")
    if split.task == data_io.CLASSIFICATION and len(split):
        k = meta.get("num_outputs")
        if k is not None and split.labels.max() >= k:
            raise ConfigurationError(f"dataset has labels beyond the model's {k} classes")


def eval_model(model_path, split: data_io.DatasetSplit, batch_size=1000) -> EvalResult:
    graph, meta = load_model(model_path)
    check_compatible(graph, meta, split)
    return evaluate(graph, split, batch_size)


__all__ = ["DataInfo", "EvalResult", "TrainResult", "check_compatible", "dataset_from_model_meta",
           "error_rate", "eval_model", "evaluate", "r_squared", "train"]
