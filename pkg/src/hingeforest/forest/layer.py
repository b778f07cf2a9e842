"""Batched hinge forest forward/backward and the graph node wrapping them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, StateError
from ..graph import Node
from . import kernels
from .params import TREE, HingeForestParams, initialize_forest


@dataclass
class ForestCache:
    """Traversal results of one batch, kept for the backward pass."""

    input_shape: tuple
    leaf: np.ndarray       # (N, M) leaf index
    margin: np.ndarray     # (N, M) signed margin r*
    vertex: np.ndarray     # (N, M) vertex of the smallest margin
    decisions: int


def _check_input(x, params):
    if x.ndim != 2:
        raise ConfigurationError(f"forest expects (N, F) input, got shape {x.shape}")
    hi = int(params.feature_index.max()) if params.feature_index.size else -1
    if hi >= x.shape[1]:
        raise ConfigurationError(
            f"feature index {hi} out of range for input with {x.shape[1]} features")


def forest_forward(x, params: HingeForestParams, backend=None):
    """Evaluate every tree on every row of ``x``.

    Returns ``(output, cache)`` where ``output[n, m] = w[m, leaf] * |r*|`` has
    shape ``(N, M, K)``.
    """
    backend = kernels.default_backend if backend is None else backend
    x = np.ascontiguousarray(x)
    _check_input(x, params)
    dtype = x.dtype
    n, m = x.shape[0], params.num_trees
    leaf = np.empty((n, m), dtype=np.int64)
    margin = np.empty((n, m), dtype=dtype)
    vertex = np.empty((n, m), dtype=np.int64)
    decisions = backend.traverse(
        x, np.ascontiguousarray(params.feature_index, dtype=np.int64),
        np.ascontiguousarray(params.thresholds, dtype=dtype),
        params.depth, params.kind != TREE, leaf, margin, vertex)
    weights = params.leaf_weights[np.arange(m)[None, :], leaf]
    out = weights * np.abs(margin)[:, :, None]
    return out.astype(dtype, copy=False), ForestCache(x.shape, leaf, margin, vertex, int(decisions))


def forest_backward(grad, cache: ForestCache | None, params: HingeForestParams, backend=None):
    """Gradients for the input, thresholds and leaf weights.

    Each (example, tree) pair touches one input feature, one threshold and
    one leaf row; margins of exactly zero contribute nothing.
    """
    if cache is None:
        raise StateError("forest backward called before forward")
    backend = kernels.default_backend if backend is None else backend
    dtype = cache.margin.dtype
    grad = np.ascontiguousarray(grad, dtype=dtype)
    input_grad = np.zeros(cache.input_shape, dtype=dtype)
    threshold_grad = np.zeros(params.thresholds.shape, dtype=dtype)
    leaf_grad = np.zeros(params.leaf_weights.shape, dtype=dtype)
    backend.backward(grad, cache.leaf, cache.margin, cache.vertex,
                     np.ascontiguousarray(params.feature_index, dtype=np.int64),
                     np.ascontiguousarray(params.leaf_weights, dtype=dtype),
                     input_grad, threshold_grad, leaf_grad)
    return input_grad, threshold_grad, leaf_grad


class HingeForest(Node):
    """Graph node holding ``M`` hinge trees (or ferns) of depth ``D``.

    Outputs the un-aggregated per-tree predictions, shape ``(N, M, K)``.
    ``decision_count`` accumulates the number of decisions evaluated.
    """

    kind = "hinge_forest"

    def __init__(self, name, inputs, num_features, num_trees, depth, num_outputs=1,
                 forest_kind=TREE, rng=None, dtype=np.float32, backend=None, params=None):
        super().__init__(name, inputs)
        if params is None:
            params = initialize_forest(num_trees, depth, num_features, num_outputs,
                                       forest_kind, rng, dtype)
        self.depth = params.depth
        self.forest_kind = params.kind
        self.num_features = int(num_features)
        self.add_param("feature_index", params.feature_index, learnable=False)
        self.add_param("thresholds", params.thresholds.astype(dtype))
        self.add_param("leaf_weights", params.leaf_weights.astype(dtype))
        self.backend = backend
        self.decision_count = 0
        self.cache: ForestCache | None = None

    @property
    def backend(self):
        return kernels.get_backend(self._backend_name)

    @backend.setter
    def backend(self, value):
        # kept by name so the node stays copyable and picklable
        if value is None:
            value = kernels.default_backend
        if not isinstance(value, str):
            value = next(k for k, v in kernels.BACKENDS.items() if v is value)
        kernels.get_backend(value)
        self._backend_name = value

    @property
    def forest(self) -> HingeForestParams:
        return HingeForestParams(self.params["feature_index"], self.params["thresholds"],
                                 self.params["leaf_weights"], self.depth, self.forest_kind)

    def forward(self, inputs):
        (x,) = inputs
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ConfigurationError(
                f"forest expects (N, {self.num_features}) input, got {x.shape}")
        out, self.cache = forest_forward(x, self.forest, self.backend)
        self.decision_count += self.cache.decisions
        return out

    def backward(self, grad):
        dx, dt, dw = forest_backward(grad, self.cache, self.forest, self.backend)
        self.grads["thresholds"] += dt
        self.grads["leaf_weights"] += dw
        return [dx]

    def spec(self):
        return {"num_features": self.num_features, "num_trees": self.params["thresholds"].shape[0],
                "depth": self.depth, "num_outputs": self.params["leaf_weights"].shape[2],
                "forest_kind": self.forest_kind}
