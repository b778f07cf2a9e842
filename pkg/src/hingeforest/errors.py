"""Exception hierarchy shared by every module."""


class HingeForestError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HingeForestError, ValueError):
    """A graph, layer or experiment was assembled with inconsistent settings."""


class DataError(HingeForestError, ValueError):
    """An input file or label set is malformed."""


class StateError(HingeForestError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class NumericalFault(HingeForestError, FloatingPointError):
    """A node produced NaN or Inf.

    Attributes
    ----------
    node : str
        Name of the first node whose output or gradient was non-finite.
    phase : str
        ``"forward"`` or ``"backward"``.
    """

    def __init__(self, node, phase, step=None):
        self.node = node
        self.phase = phase
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite {phase} value produced by node '{node}'{where}")
