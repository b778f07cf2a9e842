"""Assemble datasets and graphs from an :class:`ExperimentConfig`."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data as data_io
from .config import ROLES, ExperimentConfig
from .errors import ConfigurationError
from .forest import HingeForest, get_backend
from .graph import Graph, Input
from .layers import (Conv2d, Flatten, InnerProduct, L2Loss, RunningBatchNorm,
                     SoftmaxCrossEntropy, TreeMeanAggregate)


@dataclass
class DataInfo:
    """What the graph needs to know about the data."""

    feature_shape: tuple
    num_outputs: int
    task: str
    classes: list


def _load_file(ds, value, tag, classes=None):
    if ds.format == "idx":
        return data_io.load_idx(value["images"], value["labels"], tag=tag)
    return data_io.load_csv(value, ds.label_column, ds.has_header, ds.delimiter, ds.task,
                            ds.categorical_columns, classes, ds.label_bins, tag=tag)


def load_splits(config: ExperimentConfig) -> dict:
    """Return ``{role: DatasetSplit}`` for train, validation and (if any) test.

    Roles without their own file are cut from the shuffled training file in
    the order train, validation, test.  ``dataset.rotation`` cyclically
    shifts which piece each role receives.
    """
    ds = config.dataset
    base = _load_file(ds, ds.train, "train")
    classes = base.classes
    out = {}
    roles = [r for r in ROLES if r in ds.splits]
    if roles == ["train"] and ds.splits["train"] >= 1.0:
        out["train"] = base
    else:
        pieces = data_io.shuffle_split(base, [ds.splits[r] for r in roles], seed=ds.seed, tags=roles)
        for i, role in enumerate(roles):
            piece = pieces[(i + ds.rotation) % len(pieces)]
            piece.tag = role
            out[role] = piece
    for role in ("validation", "test"):
        value = getattr(ds, role)
        if value is not None:
            split = _load_file(ds, value, role, classes)
            classes = split.classes or classes
            out[role] = split
    for split in out.values():
        if split.task == data_io.CLASSIFICATION:
            split.classes = classes
    return out


def data_info(config: ExperimentConfig, splits: dict) -> DataInfo:
    train = splits["train"]
    k = config.architecture.forest.outputs
    if k is None:
        k = 1 if train.task == data_io.REGRESSION else len(train.classes)
    return DataInfo(train.feature_shape, int(k), train.task, list(train.classes))


def build_graph(config: ExperimentConfig, info: DataInfo | None = None, dtype=None) -> Graph:
    """Build the feature layer, batch norm, forest, mean aggregation and loss.

    Flat inputs use an inner-product feature pool; image inputs
    ``(C, H, W)`` use a strided convolution followed by flattening.  All
    parameters are drawn from ``run.seed``.
    """
    if info is None:
        info = data_info(config, load_splits(config))
    arch, run = config.architecture, config.run
    dtype = np.dtype(dtype or run.dtype)
    rng = np.random.default_rng(run.seed)
    graph = Graph(dtype=dtype)
    shape = tuple(info.feature_shape)
    graph.add(Input("input", shape))
    last = "input"
    feats = arch.features
    if feats.type == "conv":
        if len(shape) != 3:
            raise ConfigurationError(
                f"convolution features need (C, H, W) inputs, data has shape {shape}")
        conv = Conv2d("conv", [last], shape[0], feats.kernels, feats.kernel_size, feats.stride,
                      rng=rng, dtype=dtype)
        if shape[1] < feats.kernel_size or shape[2] < feats.kernel_size:
            raise ConfigurationError(
                f"{shape[1]}x{shape[2]} inputs are smaller than the {feats.kernel_size}x"
                f"{feats.kernel_size} kernel")
        graph.add(conv)
        graph.add(Flatten("flatten", ["conv"]))
        last = "flatten"
        width = int(np.prod(conv.output_shape(shape[1], shape[2])))
    else:
        width = int(np.prod(shape))
        if len(shape) != 1:
            graph.add(Flatten("flatten", [last]))
            last = "flatten"
        if feats.type == "inner_product":
            graph.add(InnerProduct("features", [last], width, feats.count, rng=rng, dtype=dtype))
            last, width = "features", feats.count
    if arch.batch_norm:
        graph.add(RunningBatchNorm("batch_norm", [last], width, dtype=dtype))
        last = "batch_norm"
    backend = get_backend(run.backend) if run.backend else None
    graph.add(HingeForest("forest", [last], width, arch.forest.trees, arch.forest.depth,
                          info.num_outputs, arch.forest.kind, rng=rng, dtype=dtype, backend=backend))
    graph.add(TreeMeanAggregate("aggregate", ["forest"]), output=True)
    loss_cls = L2Loss if info.task == data_io.REGRESSION else SoftmaxCrossEntropy
    graph.add(loss_cls("loss", ["aggregate"]), loss=True)
    return graph
