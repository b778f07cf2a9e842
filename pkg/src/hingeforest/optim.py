"""Elementwise parameter update rules: SGD, AdaGrad and Adam.

All updates happen in place.  Weight decay is coupled: it is added to the
gradient before the rule is applied.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

EPSILON = 1e-8


class Optimizer:
    """Keeps one state dict per named parameter.

    ``step`` takes an iterable of ``(name, param, grad)`` triples such as
    :meth:`hingeforest.graph.Graph.parameters`.
    """

    name = "optimizer"
    slots: tuple = ()

    def __init__(self, learning_rate=0.01, weight_decay=0.0, eps=EPSILON):
        if learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {learning_rate}")
        self.learning_rate = float(learning_rate)
        self.weight_decay = float(weight_decay)
        self.eps = float(eps)
        self.state: dict[str, dict] = {}

    def init_state(self, param):
        state = {slot: np.zeros_like(param) for slot in self.slots}
        state["step"] = 0
        return state

    def step(self, parameters):
        for name, param, grad in parameters:
            if grad is None:
                continue
            state = self.state.get(name)
            if state is None:
                state = self.state[name] = self.init_state(param)
            self.update(param, grad, state)

    def _grad(self, param, grad):
        if self.weight_decay:
            return grad + param.dtype.type(self.weight_decay) * param
        return grad

    def update(self, param, grad, state):
        raise NotImplementedError

    def hyperparameters(self) -> dict:
        return {"name": self.name, "learning_rate": self.learning_rate,
                "weight_decay": self.weight_decay, "eps": self.eps}

    def state_arrays(self) -> dict:
        """Flatten the per-parameter state for serialization."""
        out = {}
        for pname, state in self.state.items():
            for slot, value in state.items():
                out[f"{pname}/{slot}"] = np.asarray(value)
        return out

    def load_state_arrays(self, arrays: dict):
        self.state = {}
        for key, value in arrays.items():
            pname, slot = key.rsplit("/", 1)
            entry = self.state.setdefault(pname, {})
            entry[slot] = int(value) if slot == "step" else np.array(value)


class SGD(Optimizer):
    name = "sgd"

    def update(self, param, grad, state):
        g = self._grad(param, grad)
        param -= param.dtype.type(self.learning_rate) * g
        state["step"] += 1


class AdaGrad(Optimizer):
    name = "adagrad"
    slots = ("sum_sq",)

    def update(self, param, grad, state):
        g = self._grad(param, grad)
        acc = state["sum_sq"]
        acc += g * g
        param -= param.dtype.type(self.learning_rate) * g / (np.sqrt(acc) + param.dtype.type(self.eps))
        state["step"] += 1


class Adam(Optimizer):
    """Adam with bias-corrected moments.

    Moments decay on every coordinate at every step, including coordinates
    whose gradient is zero.
    """

    name = "adam"
    slots = ("m", "v")

    def __init__(self, learning_rate=0.005, beta1=0.9, beta2=0.999, weight_decay=0.0, eps=EPSILON):
        super().__init__(learning_rate, weight_decay, eps)
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigurationError(f"Adam betas must lie in [0, 1), got {beta1}, {beta2}")
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)

    def update(self, param, grad, state):
        t = param.dtype.type
        g = self._grad(param, grad)
        state["step"] += 1
        step = state["step"]
        m, v = state["m"], state["v"]
        m *= t(self.beta1)
        m += t(1 - self.beta1) * g
        v *= t(self.beta2)
        v += t(1 - self.beta2) * g * g
        m_hat = m / t(1 - self.beta1 ** step)
        v_hat = v / t(1 - self.beta2 ** step)
        param -= t(self.learning_rate) * m_hat / (np.sqrt(v_hat) + t(self.eps))

    def hyperparameters(self):
        out = super().hyperparameters()
        out.update(beta1=self.beta1, beta2=self.beta2)
        return out


OPTIMIZERS = {"sgd": SGD, "adagrad": AdaGrad, "adam": Adam}


def make_optimizer(name, learning_rate, beta1=0.9, beta2=0.999, weight_decay=0.0, eps=EPSILON):
    try:
        cls = OPTIMIZERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown optimizer '{name}'") from None
    if cls is Adam:
        return Adam(learning_rate, beta1, beta2, weight_decay, eps)
    return cls(learning_rate, weight_decay, eps)


def _single(opt, param, grad, state):
    if state is None:
        state = opt.init_state(param)
    opt.update(param, grad, state)
    return param, state


def sgd_step(param, grad, state=None, learning_rate=0.01, weight_decay=0.0):
    """One SGD update of ``param`` in place; returns ``(param, state)``."""
    return _single(SGD(learning_rate, weight_decay), param, grad, state)


def adagrad_step(param, grad, state=None, learning_rate=0.01, weight_decay=0.0, eps=EPSILON):
    return _single(AdaGrad(learning_rate, weight_decay, eps), param, grad, state)


def adam_step(param, grad, state=None, learning_rate=0.005, beta1=0.9, beta2=0.999,
              weight_decay=0.0, eps=EPSILON):
    return _single(Adam(learning_rate, beta1, beta2, weight_decay, eps), param, grad, state)
