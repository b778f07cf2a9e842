"""Random hinge trees and ferns."""
from .kernels import DEFAULT_BACKEND_NAME, get_backend
from .layer import ForestCache, HingeForest, forest_backward, forest_forward
from .params import FERN, TREE, HingeForestParams, decision_count, initialize_forest
from .traversal import (DecisionCounter, TraversalResult, fern_traverse, oracle_forward,
                        oracle_terms, tree_traverse)

__all__ = [
    "DEFAULT_BACKEND_NAME", "FERN", "TREE", "DecisionCounter", "ForestCache", "HingeForest",
    "HingeForestParams", "TraversalResult", "decision_count", "fern_traverse", "forest_backward",
    "forest_forward", "get_backend", "initialize_forest", "oracle_forward", "oracle_terms",
    "tree_traverse",
]
