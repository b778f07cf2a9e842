"""Hinge tree/fern parameters and their random initialization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

TREE = "tree"
FERN = "fern"

THRESHOLD_RANGE = 3.0
LEAF_STD = 0.01


def decision_count(depth: int, kind: str) -> int:
    """Number of decision vertices per tree (``2^D - 1``) or fern (``D``)."""
    return depth if kind == FERN else 2 ** depth - 1


@dataclass
class HingeForestParams:
    """Parameters of ``M`` hinge trees or ferns of depth ``D``.

    ``feature_index`` and ``thresholds`` have shape ``(M, V)`` with ``V`` the
    number of decision vertices, ``leaf_weights`` has shape ``(M, 2^D, K)``.
    Feature indices are fixed after initialization.
    """

    feature_index: np.ndarray
    thresholds: np.ndarray
    leaf_weights: np.ndarray
    depth: int
    kind: str = TREE
    num_features: int | None = None

    def __post_init__(self):
        if self.kind not in (TREE, FERN):
            raise ConfigurationError(f"unknown forest kind '{self.kind}'")
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        m, v = self.feature_index.shape
        if v != decision_count(self.depth, self.kind):
            raise ConfigurationError(
                f"{self.kind} of depth {self.depth} needs {decision_count(self.depth, self.kind)} "
                f"decisions per tree, got {v}")
        if self.thresholds.shape != (m, v):
            raise ConfigurationError(
                f"thresholds shape {self.thresholds.shape} != feature_index shape {(m, v)}")
        if self.leaf_weights.ndim != 3 or self.leaf_weights.shape[:2] != (m, 2 ** self.depth):
            raise ConfigurationError(
                f"leaf weights must have shape ({m}, {2 ** self.depth}, K), got {self.leaf_weights.shape}")
        if self.num_features is not None and self.feature_index.size:
            lo, hi = self.feature_index.min(), self.feature_index.max()
            if lo < 0 or hi >= self.num_features:
                raise ConfigurationError(
                    f"feature index {hi if hi >= self.num_features else lo} outside 0..{self.num_features - 1}")

    @property
    def num_trees(self) -> int:
        return self.feature_index.shape[0]

    @property
    def num_outputs(self) -> int:
        return self.leaf_weights.shape[2]

    @property
    def num_leaves(self) -> int:
        return 2 ** self.depth

    def tree(self, m: int):
        """Return ``(feature_index, thresholds, leaf_weights)`` of tree ``m``."""
        return self.feature_index[m], self.thresholds[m], self.leaf_weights[m]


def initialize_forest(num_trees, depth, num_features, num_outputs=1, kind=TREE,
                      seed=None, dtype=np.float64) -> HingeForestParams:
    """Draw random feature indices, thresholds and leaf weights.

    Feature indices are uniform over ``0..F-1`` (with replacement), thresholds
    uniform on ``(-3, 3)`` and leaf weights normal with standard deviation
    0.01.  ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if num_features < 1:
        raise ConfigurationError(f"forest needs at least one input feature, got {num_features}")
    for label, value in (("number of trees", num_trees), ("depth", depth), ("output extent", num_outputs)):
        if value < 1:
            raise ConfigurationError(f"{label} must be >= 1, got {value}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    v = decision_count(depth, kind)
    feature_index = rng.integers(0, num_features, size=(num_trees, v), dtype=np.int64)
    thresholds = rng.uniform(-THRESHOLD_RANGE, THRESHOLD_RANGE, size=(num_trees, v))
    leaf_weights = rng.normal(0.0, LEAF_STD, size=(num_trees, 2 ** depth, num_outputs))
    return HingeForestParams(feature_index, thresholds.astype(dtype), leaf_weights.astype(dtype),
                             depth, kind, num_features)
