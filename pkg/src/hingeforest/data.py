"""Dataset loading, shuffling, splitting and mini-batch iteration.

Features are passed through unnormalized; the graph's running batch norm
does the scaling.
"""
from __future__ import annotations

import csv
import gzip
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DataError

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass
class DatasetSplit:
    """Features and labels of one partition.

    ``labels`` are int64 class ids for classification and float targets for
    regression.  ``classes`` keeps the original label strings in id order.
    """

    features: np.ndarray
    labels: np.ndarray
    tag: str = "train"
    task: str = CLASSIFICATION
    classes: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise DataError(
                f"{len(self.features)} feature rows but {len(self.labels)} labels")
        if self.task == REGRESSION and not np.all(np.isfinite(self.labels)):
            raise DataError("regression targets must be finite")

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        if self.task == REGRESSION:
            return 1
        if self.classes:
            return len(self.classes)
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    @property
    def feature_shape(self) -> tuple:
        return tuple(self.features.shape[1:])

    def subset(self, index, tag=None) -> "DatasetSplit":
        return replace(self, features=self.features[index], labels=self.labels[index],
                       tag=tag or self.tag)


def _open(path, mode="rt"):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode.replace("t", "") if "b" in mode else mode, newline="" if "t" in mode else None)


def load_csv(path, label_column=-1, has_header=False, delimiter=",", task=CLASSIFICATION,
             categorical_columns=(), classes=None, label_bins=None, tag="train") -> DatasetSplit:
    """Read a delimited text file.

    Parameters
    ----------
    label_column : int or str
        Column index (negative counts from the end) or header name.
    categorical_columns : sequence of int or str
        Non-label columns holding category names; each is coded as a single
        number in order of first appearance.
    classes : list of str, optional
        Known class names (e.g. from the training file).  Unseen labels are
        appended in order of first appearance.
    label_bins : sequence of float, optional
        Turn a numeric label into classes by bin edges (``numpy.digitize``).
    """
    with _open(path) as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh, delimiter=delimiter))
                if row and any(cell.strip() for cell in row)]
    header = None
    if has_header:
        if not rows:
            raise DataError(f"{path}: empty file")
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(header) if header else len(rows[0][1])

    def resolve(col):
        if isinstance(col, str) and not col.lstrip("-").isdigit():
            if header is None or col not in header:
                raise ConfigurationError(f"{path}: no column named '{col}'")
            return header.index(col)
        col = int(col)
        if not -width <= col < width:
            raise ConfigurationError(f"{path}: column {col} out of range for {width} columns")
        return col % width

    label_col = resolve(label_column)
    cat_cols = {resolve(c) for c in categorical_columns}
    feature_cols = [c for c in range(width) if c != label_col]
    codes = {c: {} for c in cat_cols}
    features = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    raw_labels = []
    for r, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
        for j, c in enumerate(feature_cols):
            cell = row[c].strip()
            if c in cat_cols:
                features[r, j] = codes[c].setdefault(cell, len(codes[c]))
                continue
            try:
                features[r, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: column {c + 1}: non-numeric value {cell!r}") from None
        raw_labels.append(row[label_col].strip())

    if task == REGRESSION or label_bins is not None:
        try:
            values = np.array([float(v) for v in raw_labels])
        except ValueError as exc:
            raise DataError(f"{path}: non-numeric label: {exc}") from None
        if task == REGRESSION:
            return DatasetSplit(features, values, tag, REGRESSION)
        labels = np.digitize(values, label_bins).astype(np.int64)
        names = [str(i) for i in range(len(label_bins) + 1)]
        return DatasetSplit(features, labels, tag, CLASSIFICATION, names)
    if task != CLASSIFICATION:
        raise ConfigurationError(f"unknown task '{task}'")
    names = list(classes) if classes else []
    lookup = {name: i for i, name in enumerate(names)}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, name in enumerate(raw_labels):
        if name not in lookup:
            lookup[name] = len(names)
            names.append(name)
        labels[i] = lookup[name]
    return DatasetSplit(features, labels, tag, CLASSIFICATION, names)


def _read_idx(path, magic, ndim):
    with _open(path, "rb") as fh:
        blob = fh.read()
    header_len = 4 + 4 * ndim
    if len(blob) >= 4:
        got = int.from_bytes(blob[:4], "big")
        if got != magic:
            raise DataError(f"{path}: bad IDX magic {got:#010x}, expected {magic:#010x}")
    if len(blob) < header_len:
        raise DataError(f"{path}: truncated IDX header")
    dims = [int.from_bytes(blob[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    expected = header_len + math.prod(dims)
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes for dims {dims}, file has {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=header_len).reshape(dims)


def load_idx(images_path, labels_path, tag="train") -> DatasetSplit:
    """Read an IDX image/label pair (MNIST layout, optionally gzipped).

    Images come back as float32 ``(N, 1, H, W)`` scaled to ``[0, 1]``.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise DataError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    feats = (images.astype(np.float32) / np.float32(255.0))[:, None, :, :]
    labels = labels.astype(np.int64)
    classes = [str(i) for i in range(int(labels.max()) + 1)] if len(labels) else []
    return DatasetSplit(feats, labels, tag, CLASSIFICATION, classes)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 arrays in IDX format (used for fixtures and conversions)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with _open(images_path, "wb") as fh:
        fh.write(IDX_IMAGES_MAGIC.to_bytes(4, "big"))
        for d in images.shape:
            fh.write(int(d).to_bytes(4, "big"))
        fh.write(images.tobytes())
    with _open(labels_path, "wb") as fh:
        fh.write(IDX_LABELS_MAGIC.to_bytes(4, "big"))
        fh.write(len(labels).to_bytes(4, "big"))
        fh.write(labels.tobytes())


def split_sizes(n, fractions):
    # tolerance so that a rounded 0.3333333333 of 150 rows still gives 50
    return [int(math.floor(f * n + 1e-6)) for f in fractions]


def shuffle_split(data: DatasetSplit, fractions, seed=None, tags=None) -> list[DatasetSplit]:
    """Permute ``data`` with ``seed`` and cut consecutive pieces of it.

    Piece ``i`` holds ``floor(fractions[i] * N)`` rows.
    """
    fractions = list(fractions)
    if not fractions or any(f <= 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ConfigurationError(f"split fractions must be positive and sum to <= 1, got {fractions}")
    sizes = split_sizes(len(data), fractions)
    if any(s == 0 for s in sizes):
        raise ConfigurationError(f"fractions {fractions} of {len(data)} rows give an empty split")
    tags = tags or [f"split{i}" for i in range(len(fractions))]
    perm = np.random.default_rng(seed).permutation(len(data))
    out, start = [], 0
    for size, tag in zip(sizes, tags):
        out.append(data.subset(perm[start:start + size], tag))
        start += size
    return out


class BatchStream:
    """Endless shuffled mini-batches over a split.

    Each epoch draws a fresh permutation from the stream's generator.  The
    position can be saved with :meth:`state` and restored with
    :meth:`restore`, so an interrupted run continues with the same batches.
    """

    def __init__(self, split: DatasetSplit, batch_size, seed=None):
        if batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {batch_size}")
        n = len(split)
        if n == 0:
            raise ConfigurationError("cannot iterate over an empty split")
        if batch_size > n:
            warnings.warn(f"batch size {batch_size} exceeds split size {n}; using whole split",
                          stacklevel=3)
            batch_size = n
        self.split = split
        self.batch_size = batch_size
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.epoch = -1
        self._new_epoch()

    def _new_epoch(self):
        self._epoch_state = self.rng.bit_generator.state
        self.perm = self.rng.permutation(len(self.split))
        self.position = 0
        self.epoch += 1

    def next_batch(self):
        if self.position >= len(self.perm):
            self._new_epoch()
        idx = self.perm[self.position:self.position + self.batch_size]
        self.position += len(idx)
        return self.split.features[idx], self.split.labels[idx]

    def state(self) -> dict:
        return {"rng": self._epoch_state, "position": self.position, "epoch": self.epoch}

    def restore(self, state: dict):
        self.rng.bit_generator.state = state["rng"]
        self.epoch = state["epoch"] - 1
        self._new_epoch()
        self.position = state["position"]


def minibatch_iter(split: DatasetSplit, batch_size, seed=None, epochs=None, steps=None):
    """Yield ``(features, labels)`` batches, reshuffling every epoch.

    Stops after ``epochs`` passes or ``steps`` batches, whichever is given
    (``epochs=1`` if neither).  The last batch of an epoch may be short.
    """
    stream = BatchStream(split, batch_size, seed)
    if epochs is None and steps is None:
        epochs = 1
    emitted = 0
    while steps is None or emitted < steps:
        if epochs is not None and stream.epoch >= epochs - 1 and stream.position >= len(stream.perm):
            return
        yield stream.next_batch()
        emitted += 1


def batches_per_epoch(n, batch_size):
    return -(-n // min(batch_size, n))
