"""Single-example reference traversals and the brute-force leaf-sum oracle.

These are deliberately plain Python; the batched kernels used for training
live in :mod:`hingeforest.forest.kernels`.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class TraversalResult(NamedTuple):
    leaf: int
    margin: float
    vertex: int


class DecisionCounter:
    """Counts compare-and-branch evaluations."""

    def __init__(self):
        self.count = 0


def tree_traverse(x, feature_index, thresholds, depth, counter=None) -> TraversalResult:
    """Route ``x`` down a complete binary tree while tracking the smallest margin.

    Vertices are numbered in breadth-first order (children of ``v`` are
    ``2v+1`` and ``2v+2``).  A margin of exactly zero routes left.  Ties in
    ``|r|`` keep the shallower vertex.
    """
    leaf = v = best_v = 0
    best_r = None
    for _ in range(depth):
        r = x[feature_index[v]] - thresholds[v]
        if counter is not None:
            counter.count += 1
        if best_r is None or abs(r) < abs(best_r):
            best_r, best_v = r, v
        right = 1 if r > 0 else 0
        leaf = 2 * leaf + right
        v = 2 * v + right + 1
    return TraversalResult(leaf, best_r, best_v)


def fern_traverse(x, feature_index, thresholds, depth, counter=None) -> TraversalResult:
    """Like :func:`tree_traverse` but level ``i`` always uses decision ``i``."""
    leaf = best_v = 0
    best_r = None
    for i in range(depth):
        r = x[feature_index[i]] - thresholds[i]
        if counter is not None:
            counter.count += 1
        if best_r is None or abs(r) < abs(best_r):
            best_r, best_v = r, i
        leaf = 2 * leaf + (1 if r > 0 else 0)
    return TraversalResult(leaf, best_r, best_v)


def leaf_path(leaf, depth, fern=False):
    """Decision vertices and directions (+1 right, -1 left) leading to ``leaf``."""
    bits = [(leaf >> (depth - 1 - i)) & 1 for i in range(depth)]
    path = []
    v = 0
    for i, bit in enumerate(bits):
        vertex = i if fern else v
        path.append((vertex, 1 if bit else -1))
        v = 2 * v + bit + 1
    return path


def oracle_terms(x, feature_index, thresholds, leaf_weights, depth, fern=False):
    """Per-leaf terms ``w_leaf * min_path relu(direction * (x_f - t))``.

    Enumerates all ``2^D`` leaves; use only for small depths.
    """
    x = np.asarray(x, dtype=np.float64)
    terms = []
    for leaf in range(2 ** depth):
        indicator = min(
            max(direction * (x[feature_index[v]] - thresholds[v]), 0.0)
            for v, direction in leaf_path(leaf, depth, fern))
        terms.append(np.asarray(leaf_weights[leaf], dtype=np.float64) * indicator)
    return terms


def oracle_forward(x, feature_index, thresholds, leaf_weights, depth, fern=False):
    """Sum of :func:`oracle_terms` over every leaf."""
    return np.sum(oracle_terms(x, feature_index, thresholds, leaf_weights, depth, fern), axis=0)
