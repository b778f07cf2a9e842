"""Dense layers, running batch normalization, aggregation and losses."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigurationError, DataError, StateError
from .graph import LossNode, Node

INIT_STD = 0.01


class InnerProduct(Node):
    """``y = x @ W.T + b`` with ``W`` of shape ``(F_out, F_in)``."""

    kind = "inner_product"

    def __init__(self, name, inputs, in_features, out_features, rng=None, dtype=np.float32):
        super().__init__(name, inputs)
        rng = np.random.default_rng() if rng is None else rng
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.add_param("weights", rng.normal(0.0, INIT_STD, (out_features, in_features)).astype(dtype))
        self.add_param("bias", np.zeros(out_features, dtype=dtype))

    def forward(self, inputs):
        (x,) = inputs
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigurationError(
                f"inner product expects (N, {self.in_features}) input, got {x.shape}")
        self._x = x
        return x @ self.params["weights"].T + self.params["bias"]

    def backward(self, grad):
        x = self._x
        self.grads["weights"] += grad.T @ x
        self.grads["bias"] += grad.sum(axis=0)
        return [grad @ self.params["weights"]]

    def spec(self):
        return {"in_features": self.in_features, "out_features": self.out_features}


def conv_output_size(size, kernel, stride):
    return (size - kernel) // stride + 1


def _windows(x, kernel, stride):
    """Strided view of shape ``(N, C, H', W', kernel, kernel)``."""
    n, c, h, w = x.shape
    oh = conv_output_size(h, kernel, stride)
    ow = conv_output_size(w, kernel, stride)
    sn, sc, sh, sw = x.strides
    return as_strided(x, (n, c, oh, ow, kernel, kernel),
                      (sn, sc, sh * stride, sw * stride, sh, sw), writeable=False)


class Conv2d(Node):
    """Valid 2-D cross-correlation, no padding.

    Input ``(N, C, H, W)``, kernels ``(K, C, k, k)``, output ``(N, K, H', W')``
    with ``H' = (H - k) // stride + 1``.
    """

    kind = "conv"

    def __init__(self, name, inputs, in_channels, out_channels, kernel_size=5, stride=3,
                 rng=None, dtype=np.float32):
        super().__init__(name, inputs)
        rng = np.random.default_rng() if rng is None else rng
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.add_param("kernels", rng.normal(0.0, INIT_STD, shape).astype(dtype))
        self.add_param("bias", np.zeros(out_channels, dtype=dtype))

    def output_shape(self, height, width):
        return (self.out_channels,
                conv_output_size(height, self.kernel_size, self.stride),
                conv_output_size(width, self.kernel_size, self.stride))

    def forward(self, inputs):
        (x,) = inputs
        k = self.kernel_size
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ConfigurationError(
                f"convolution expects (N, {self.in_channels}, H, W) input, got {x.shape}")
        if x.shape[2] < k or x.shape[3] < k:
            raise ConfigurationError(
                f"input {x.shape[2]}x{x.shape[3]} is smaller than the {k}x{k} kernel")
        n = x.shape[0]
        _, oh, ow = self.output_shape(x.shape[2], x.shape[3])
        # im2col: rows are (example, out_y, out_x), columns are (channel, ky, kx)
        cols = _windows(np.ascontiguousarray(x), k, self.stride).transpose(0, 2, 3, 1, 4, 5)
        cols = cols.reshape(n * oh * ow, -1)
        self._cols, self._in_shape = cols, x.shape
        kmat = self.params["kernels"].reshape(self.out_channels, -1)
        out = cols @ kmat.T + self.params["bias"]
        return out.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, grad):
        k, s = self.kernel_size, self.stride
        n, c = self._in_shape[:2]
        oh, ow = grad.shape[2], grad.shape[3]
        gmat = grad.transpose(0, 2, 3, 1).reshape(n * oh * ow, self.out_channels)
        kernels = self.params["kernels"]
        self.grads["kernels"] += (gmat.T @ self._cols).reshape(kernels.shape)
        self.grads["bias"] += gmat.sum(axis=0)
        dcols = (gmat @ kernels.reshape(self.out_channels, -1)).reshape(n, oh, ow, c, k, k)
        dx = np.zeros(self._in_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                # each kernel tap scatters into a strided slice of the input
                dx[:, :, i:i + s * (oh - 1) + 1:s, j:j + s * (ow - 1) + 1:s] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return [dx]

    def spec(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "stride": self.stride}


class Flatten(Node):
    kind = "flatten"

    def forward(self, inputs):
        (x,) = inputs
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return [grad.reshape(self._shape)]


class RunningBatchNorm(Node):
    """Normalize by a running mean and standard deviation.

    In training mode the running statistics are first moved toward the batch
    statistics by an exponential moving average and the batch is then
    normalized with the updated values, so training and inference share one
    formula.  There is no learnable scale or shift, and the backward pass
    treats the statistics as constants.
    """

    kind = "batch_norm"

    def __init__(self, name, inputs, num_features, momentum=0.05, eps=1e-5, dtype=np.float32):
        super().__init__(name, inputs)
        self.num_features = int(num_features)
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.frozen = False
        self.add_param("mean", np.zeros(num_features, dtype=dtype), learnable=False)
        self.add_param("std", np.ones(num_features, dtype=dtype), learnable=False)
        self.training = True

    def update_stats(self, x):
        a = self.momentum
        mean, std = self.params["mean"], self.params["std"]
        mean *= 1.0 - a
        mean += a * x.mean(axis=0)
        std *= 1.0 - a
        std += a * x.std(axis=0)

    def forward(self, inputs):
        (x,) = inputs
        if x.shape[0] == 0:
            raise StateError("batch normalization received an empty batch")
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ConfigurationError(
                f"batch norm expects (N, {self.num_features}) input, got {x.shape}")
        if self.training and not self.frozen:
            self.update_stats(x)
        self._scale = 1.0 / (self.params["std"] + x.dtype.type(self.eps))
        return (x - self.params["mean"]) * self._scale

    def backward(self, grad):
        return [grad * self._scale]

    def spec(self):
        return {"num_features": self.num_features, "momentum": self.momentum, "eps": self.eps}


class TreeMeanAggregate(Node):
    """Average per-tree outputs ``(N, M, K)`` into ``(N, K)``."""

    kind = "tree_mean"

    def forward(self, inputs):
        (x,) = inputs
        if x.ndim != 3 or x.shape[1] < 1:
            raise ConfigurationError(f"aggregation expects (N, M, K) input, got {x.shape}")
        self._m = x.shape[1]
        return x.mean(axis=1)

    def backward(self, grad):
        g = grad / grad.dtype.type(self._m)
        return [np.repeat(g[:, None, :], self._m, axis=1)]


class SoftmaxCrossEntropy(LossNode):
    """Mean negative log-likelihood of integer labels under softmax(logits)."""

    kind = "softmax_loss"

    def forward(self, inputs):
        (logits,) = inputs
        labels = np.asarray(self.labels)
        n, k = logits.shape
        if labels.shape != (n,):
            raise ConfigurationError(f"expected {n} labels, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise DataError("softmax loss needs integer class labels")
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise DataError(f"label out of range 0..{k - 1}")
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        log_p = shifted - log_z[:, None]
        self._prob = np.exp(log_p)
        self._labels = labels
        return np.asarray(-log_p[np.arange(n), labels].mean(), dtype=logits.dtype)

    def backward(self, grad):
        n = self._prob.shape[0]
        g = self._prob.copy()
        g[np.arange(n), self._labels] -= 1
        return [g * (grad / n)]


class L2Loss(LossNode):
    """Mean squared error; predictions ``(N, 1)``, targets ``(N,)`` or ``(N, 1)``."""

    kind = "l2_loss"

    def forward(self, inputs):
        (pred,) = inputs
        target = np.asarray(self.labels, dtype=pred.dtype)
        if target.ndim == 1:
            target = target[:, None]
        if target.shape != pred.shape:
            raise ConfigurationError(
                f"prediction shape {pred.shape} does not match target shape {target.shape}")
        self._diff = pred - target
        return np.asarray(np.mean(self._diff ** 2), dtype=pred.dtype)

    def backward(self, grad):
        return [self._diff * (2.0 * grad / self._diff.size)]


# standalone functional forms
def inner_product_forward(x, weights, bias):
    return x @ weights.T + bias


def conv2d_forward(x, kernels, bias, stride=3):
    layer = Conv2d("conv", [], kernels.shape[1], kernels.shape[0], kernels.shape[2], stride)
    layer.params["kernels"], layer.params["bias"] = kernels, bias
    return layer.forward([x])


def softmax_cross_entropy(logits, labels):
    loss = SoftmaxCrossEntropy("loss")
    loss.labels = labels
    return float(loss.forward([np.asarray(logits)]))


def l2_loss(pred, targets):
    loss = L2Loss("loss")
    loss.labels = targets
    return float(loss.forward([np.asarray(pred)]))


def tree_mean_aggregate(tree_outputs):
    return TreeMeanAggregate("agg").forward([np.asarray(tree_outputs)])
