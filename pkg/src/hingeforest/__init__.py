"""Random hinge forests and ferns in a small backpropagating graph engine."""
from .errors import ConfigurationError, DataError, HingeForestError, NumericalFault, StateError
from .graph import Graph, Input, Node, topological_order

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DataError", "Graph", "HingeForestError", "Input", "Node",
    "NumericalFault", "StateError", "topological_order",
]
