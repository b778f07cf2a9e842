"""A small directed-acyclic computation graph.

Nodes hold a fixed-kind layer, the names of the nodes feeding it, and their
own parameters.  The graph evaluates nodes in a stable topological order and
accumulates gradients in reverse.  Tensors are plain numpy arrays.
"""
from __future__ import annotations

import heapq
from collections import OrderedDict

import numpy as np

from .errors import ConfigurationError, NumericalFault, StateError

Tensor = np.ndarray


class Node:
    """Base class for graph layers.

    Subclasses implement :meth:`forward` and :meth:`backward`.  ``forward``
    receives the list of input tensors and returns the output tensor;
    ``backward`` receives the gradient of the loss with respect to that output
    and returns one gradient per input (``None`` where an input is not
    differentiable), writing parameter gradients into :attr:`grads`.
    """

    kind = "node"

    def __init__(self, name: str, inputs=()):
        self.name = name
        self.inputs = list(inputs)
        self.params: dict[str, Tensor] = OrderedDict()
        self.grads: dict[str, Tensor] = OrderedDict()
        self.learnable: dict[str, bool] = OrderedDict()
        self.output: Tensor | None = None
        self.grad: Tensor | None = None

    def add_param(self, name: str, value: Tensor, learnable: bool = True) -> Tensor:
        self.params[name] = value
        self.learnable[name] = learnable
        if learnable:
            self.grads[name] = np.zeros_like(value)
        return value

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0)
        self.grad = None

    def forward(self, inputs: list[Tensor]) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> list[Tensor | None]:
        raise NotImplementedError

    def cast(self, dtype):
        """Convert real-valued parameters (and any buffers) to ``dtype``."""
        for key, value in self.params.items():
            if np.issubdtype(value.dtype, np.floating):
                self.params[key] = value.astype(dtype)
                if key in self.grads:
                    self.grads[key] = np.zeros_like(self.params[key])

    def spec(self) -> dict:
        """Architecture description used by serialization."""
        return {}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, inputs={self.inputs})"


class Input(Node):
    """Placeholder fed by :meth:`Graph.run_forward`."""

    kind = "input"

    def __init__(self, name: str = "input", shape=None):
        super().__init__(name)
        self.shape = tuple(shape) if shape is not None else None
        self.value: Tensor | None = None

    def forward(self, inputs):
        return self.value

    def backward(self, grad):
        return []

    def spec(self):
        return {"shape": list(self.shape) if self.shape is not None else None}


class LossNode(Node):
    """A node with a scalar output that also consumes the batch labels."""

    kind = "loss"

    def __init__(self, name, inputs=()):
        super().__init__(name, inputs)
        self.labels = None


def topological_order(nodes: "OrderedDict[str, Node]") -> list[str]:
    """Order node names so that every node follows its inputs.

    Among nodes that are ready at the same time the one inserted first wins,
    which makes the order deterministic.

    Raises
    ------
    ConfigurationError
        If an input refers to an unknown node or the edges contain a cycle.
    """
    names = list(nodes)
    position = {name: i for i, name in enumerate(names)}
    indegree = {}
    consumers: dict[str, list[str]] = {name: [] for name in names}
    for name, node in nodes.items():
        for src in node.inputs:
            if src not in nodes:
                raise ConfigurationError(f"node '{name}' reads unknown node '{src}'")
            consumers[src].append(name)
        indegree[name] = len(node.inputs)

    ready = [position[n] for n in names if indegree[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        name = names[heapq.heappop(ready)]
        order.append(name)
        for dst in consumers[name]:
            indegree[dst] -= 1
            if indegree[dst] == 0:
                heapq.heappush(ready, position[dst])
    if len(order) != len(names):
        stuck = next(n for n in names if indegree[n] > 0)
        raise ConfigurationError(f"cycle detected in graph involving node '{stuck}'")
    return order


class Graph:
    """Container that runs forward and backward passes over its nodes.

    Parameters
    ----------
    dtype : numpy dtype
        Floating point type of activations and parameters.
    check_finite : bool
        Raise :class:`NumericalFault` as soon as a node emits NaN/Inf.
    """

    def __init__(self, dtype=np.float32, check_finite: bool = True):
        self.nodes: OrderedDict[str, Node] = OrderedDict()
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.training = True
        self.input_name: str | None = None
        self.loss_name: str | None = None
        self.output_name: str | None = None
        self._order: list[str] | None = None
        self._forward_done = False

    # construction
    def add(self, node: Node, loss: bool = False, output: bool = False) -> Node:
        if node.name in self.nodes:
            raise ConfigurationError(f"duplicate node name '{node.name}'")
        self.nodes[node.name] = node
        if isinstance(node, Input) and self.input_name is None:
            self.input_name = node.name
        if loss:
            self.loss_name = node.name
        if output:
            self.output_name = node.name
        self._order = None
        return node

    def __getitem__(self, name: str) -> Node:
        return self.nodes[name]

    @property
    def order(self) -> list[str]:
        if self._order is None:
            self._order = topological_order(self.nodes)
        return self._order

    def parameters(self, learnable_only: bool = True):
        """Yield ``(qualified_name, param, grad)`` for each parameter."""
        for name in self.order:
            node = self.nodes[name]
            for key, value in node.params.items():
                if learnable_only and not node.learnable[key]:
                    continue
                yield f"{name}.{key}", value, node.grads.get(key)

    def train(self, mode: bool = True):
        self.training = mode
        for node in self.nodes.values():
            if hasattr(node, "training"):
                node.training = mode
        return self

    def eval(self):
        return self.train(False)

    def cast(self, dtype):
        """Convert every node to ``dtype`` in place."""
        self.dtype = np.dtype(dtype)
        for node in self.nodes.values():
            node.cast(self.dtype)
        self._forward_done = False
        return self

    # execution
    def _run(self, batch, labels=None, upto=None):
        if self.input_name is None:
            raise ConfigurationError("graph has no input node")
        batch = np.asarray(batch)
        if labels is not None and len(labels) != batch.shape[0]:
            raise ConfigurationError(
                f"batch has {batch.shape[0]} examples but labels have {len(labels)}")
        if batch.shape[0] < 1:
            raise ConfigurationError("empty batch")
        self.nodes[self.input_name].value = batch.astype(self.dtype, copy=False)
        for name in self.order:
            node = self.nodes[name]
            if isinstance(node, LossNode):
                if labels is None:
                    continue
                node.labels = labels
            args = [self.nodes[src].output for src in node.inputs]
            if any(a is None for a in args):
                continue
            try:
                out = node.forward(args)
            except ConfigurationError as exc:
                raise ConfigurationError(
                    f"node '{name}' (inputs {', '.join(node.inputs)}): {exc}") from exc
            if self.check_finite and not np.all(np.isfinite(out)):
                raise NumericalFault(name, "forward")
            node.output = out
            if upto is not None and name == upto:
                break

    def predict(self, batch) -> Tensor:
        """Forward ``batch`` up to the output node and return its value."""
        for node in self.nodes.values():
            node.output = None
        self._run(batch, None, upto=self.output_name)
        self._forward_done = False
        return self.nodes[self.output_name].output

    def run_forward(self, batch, labels) -> float:
        """Evaluate every node and return the mean batch loss."""
        if self.loss_name is None:
            raise ConfigurationError("graph has no loss node")
        for node in self.nodes.values():
            node.output = None
        self._run(batch, labels)
        self._forward_done = True
        return float(self.nodes[self.loss_name].output)

    def run_backward(self):
        """Accumulate d(loss)/d(everything) into node gradients.

        Gradients are zeroed first.  A node with several consumers receives the
        sum of their contributions in reverse topological order.
        """
        if not self._forward_done:
            raise StateError("run_backward called before run_forward")
        for node in self.nodes.values():
            node.zero_grad()
        loss = self.nodes[self.loss_name]
        loss.grad = np.ones_like(loss.output)
        for name in reversed(self.order):
            node = self.nodes[name]
            if node.grad is None or not node.inputs:
                continue
            in_grads = node.backward(node.grad)
            if self.check_finite:
                bad = any(g is not None and not np.all(np.isfinite(g)) for g in in_grads)
                bad = bad or any(not np.all(np.isfinite(g)) for g in node.grads.values())
                if bad:
                    raise NumericalFault(name, "backward")
            for src, g in zip(node.inputs, in_grads):
                if g is None:
                    continue
                upstream = self.nodes[src]
                if upstream.grad is None:
                    upstream.grad = np.array(g, copy=True)
                else:
                    upstream.grad += g
