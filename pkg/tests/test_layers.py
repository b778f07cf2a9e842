import numpy as np
import pytest

from hingeforest.errors import ConfigurationError, DataError, StateError
from hingeforest.layers import (Conv2d, Flatten, InnerProduct, L2Loss, RunningBatchNorm,
                                SoftmaxCrossEntropy, TreeMeanAggregate, conv2d_forward,
                                conv_output_size, inner_product_forward, l2_loss,
                                softmax_cross_entropy, tree_mean_aggregate)


def numeric_grad(f, arr, h=1e-6):
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        hi = f()
        arr[idx] = old - h
        lo = f()
        arr[idx] = old
        out[idx] = (hi - lo) / (2 * h)
    return out


def naive_conv(x, k, b, stride):
    n, c, h, w = x.shape
    kk = k.shape[2]
    oh, ow = (h - kk) // stride + 1, (w - kk) // stride + 1
    out = np.zeros((n, k.shape[0], oh, ow))
    for a in range(n):
        for o in range(k.shape[0]):
            for i in range(oh):
                for j in range(ow):
                    patch = x[a, :, i * stride:i * stride + kk, j * stride:j * stride + kk]
                    out[a, o, i, j] = np.sum(patch * k[o]) + b[o]
    return out


def test_inner_product_example():
    x = np.array([[1.0, 2.0]])
    w = np.array([[1.0, -1.0], [0.5, 0.5], [2.0, 0.0]])
    b = np.array([0.0, 1.0, -1.0])
    np.testing.assert_array_equal(inner_product_forward(x, w, b), [[-1.0, 2.5, 1.0]])


def test_inner_product_gradients(rng):
    layer = InnerProduct("ip", ["x"], 4, 3, rng=rng, dtype=np.float64)
    x = rng.normal(size=(5, 4))
    g = rng.normal(size=(5, 3))
    layer.forward([x])
    (dx,) = layer.backward(g)
    np.testing.assert_allclose(dx, numeric_grad(lambda: np.sum(g * layer.forward([x])), x), atol=1e-7)
    w = layer.params["weights"]
    np.testing.assert_allclose(layer.grads["weights"],
                               numeric_grad(lambda: np.sum(g * layer.forward([x])), w), atol=1e-7)
    np.testing.assert_allclose(layer.grads["bias"], g.sum(axis=0))


def test_inner_product_init_and_shape_check(rng):
    layer = InnerProduct("ip", ["x"], 200, 100, rng=rng)
    assert layer.params["weights"].std() == pytest.approx(0.01, rel=0.05)
    assert not layer.params["bias"].any()
    with pytest.raises(ConfigurationError, match="expects"):
        layer.forward([np.zeros((2, 3), dtype=np.float32)])


def test_conv_output_size():
    assert conv_output_size(28, 5, 3) == 8
    assert conv_output_size(8, 5, 3) == 2
    assert conv_output_size(5, 5, 3) == 1


def test_conv_hand_example():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    k = np.ones((1, 1, 2, 2))
    out = conv2d_forward(x, k, np.array([0.5]), stride=2)
    # sums of 2x2 blocks: [0,1,4,5] etc.
    np.testing.assert_array_equal(out, [[[[10.5, 18.5], [42.5, 50.5]]]])


@pytest.mark.parametrize("shape,stride", [((2, 1, 11, 14), 3), ((1, 3, 7, 7), 1), ((3, 2, 9, 5), 2)])
def test_conv_matches_naive_loops(rng, shape, stride):
    layer = Conv2d("c", ["x"], shape[1], 4, 5 if shape[3] >= 5 else 3, stride, rng=rng,
                   dtype=np.float64)
    layer.params["bias"][:] = rng.normal(size=4)
    x = rng.normal(size=shape)
    ref = naive_conv(x, layer.params["kernels"], layer.params["bias"], stride)
    np.testing.assert_allclose(layer.forward([x]), ref, atol=1e-12)


def test_conv_gradients(rng):
    layer = Conv2d("c", ["x"], 2, 3, 3, 2, rng=rng, dtype=np.float64)
    layer.params["kernels"][:] = rng.normal(size=layer.params["kernels"].shape)
    x = rng.normal(size=(2, 2, 7, 8))
    out = layer.forward([x])
    assert out.shape == (2, 3, 3, 3)
    g = rng.normal(size=out.shape)
    (dx,) = layer.backward(g)
    f = lambda: np.sum(g * layer.forward([x]))  # noqa: E731
    np.testing.assert_allclose(dx, numeric_grad(f, x), atol=1e-7)
    np.testing.assert_allclose(layer.grads["kernels"], numeric_grad(f, layer.params["kernels"]),
                               atol=1e-7)
    np.testing.assert_allclose(layer.grads["bias"], g.sum(axis=(0, 2, 3)), atol=1e-12)


def test_conv_rejects_bad_inputs(rng):
    layer = Conv2d("c", ["x"], 1, 2, 5, 3, rng=rng)
    with pytest.raises(ConfigurationError, match="smaller than"):
        layer.forward([np.zeros((1, 1, 4, 4), dtype=np.float32)])
    with pytest.raises(ConfigurationError, match="expects"):
        layer.forward([np.zeros((1, 2, 8, 8), dtype=np.float32)])


def test_flatten_roundtrip(rng):
    layer = Flatten("flat", ["x"])
    x = rng.normal(size=(3, 2, 4, 5))
    out = layer.forward([x])
    assert out.shape == (3, 40)
    (dx,) = layer.backward(out)
    np.testing.assert_array_equal(dx, x)


def test_batch_norm_first_step_example():
    bn = RunningBatchNorm("bn", ["x"], 2, dtype=np.float64)
    x = np.array([[1.0, 10.0], [3.0, 10.0]])
    out = bn.forward([x])
    # mean = 0.05*[2,10], std = 0.95 + 0.05*[1,0]
    np.testing.assert_allclose(bn.params["mean"], [0.1, 0.5])
    np.testing.assert_allclose(bn.params["std"], [1.0, 0.95])
    np.testing.assert_allclose(out, (x - [0.1, 0.5]) / (np.array([1.0, 0.95]) + 1e-5))


def test_batch_norm_converges_to_batch_statistics(rng):
    bn = RunningBatchNorm("bn", ["x"], 3, dtype=np.float64)
    x = rng.normal(loc=[1.0, -2.0, 5.0], scale=[0.5, 2.0, 3.0], size=(256, 3))
    for _ in range(400):
        bn.forward([x])
    np.testing.assert_allclose(bn.params["mean"], x.mean(axis=0), rtol=1e-6)
    np.testing.assert_allclose(bn.params["std"], x.std(axis=0), rtol=1e-6)


def test_batch_norm_eval_does_not_update(rng):
    bn = RunningBatchNorm("bn", ["x"], 3)
    bn.training = False
    bn.forward([rng.normal(size=(4, 3)).astype(np.float32)])
    assert not bn.params["mean"].any() and (bn.params["std"] == 1).all()


def test_batch_norm_frozen_train_equals_eval(rng):
    bn = RunningBatchNorm("bn", ["x"], 6)
    for _ in range(5):
        bn.forward([rng.normal(size=(8, 6)).astype(np.float32)])
    bn.frozen = True
    x = rng.normal(size=(8, 6)).astype(np.float32)
    a = bn.forward([x]).copy()
    bn.training = False
    b = bn.forward([x])
    assert a.tobytes() == b.tobytes()


def test_batch_norm_backward_uses_stored_std():
    bn = RunningBatchNorm("bn", ["x"], 2, dtype=np.float64)
    bn.training = False
    bn.params["std"][:] = [2.0, 4.0]
    bn.forward([np.zeros((1, 2))])
    (dx,) = bn.backward(np.ones((1, 2)))
    np.testing.assert_allclose(dx, [[1 / (2 + 1e-5), 1 / (4 + 1e-5)]])


def test_batch_norm_errors():
    bn = RunningBatchNorm("bn", ["x"], 2)
    with pytest.raises(StateError):
        bn.forward([np.zeros((0, 2), dtype=np.float32)])
    with pytest.raises(ConfigurationError):
        bn.forward([np.zeros((1, 3), dtype=np.float32)])


def test_tree_mean_example():
    out = tree_mean_aggregate([[[1.0, 2.0], [3.0, 6.0]]])
    np.testing.assert_array_equal(out, [[2.0, 4.0]])
    agg = TreeMeanAggregate("a", ["f"])
    agg.forward([np.zeros((1, 4, 2))])
    (dx,) = agg.backward(np.array([[4.0, 8.0]]))
    np.testing.assert_array_equal(dx, np.tile([[1.0, 2.0]], (1, 4, 1)))


def test_softmax_cross_entropy_examples():
    assert softmax_cross_entropy([[0.0, 0.0]], [1]) == pytest.approx(np.log(2))
    # shift invariance and large logits stay finite
    assert softmax_cross_entropy([[1000.0, 0.0]], [0]) == pytest.approx(0.0, abs=1e-12)
    assert softmax_cross_entropy([[1000.0, 0.0]], [1]) == pytest.approx(1000.0)


def test_softmax_gradient(rng):
    loss = SoftmaxCrossEntropy("loss", ["z"])
    z = rng.normal(size=(4, 3))
    loss.labels = np.array([0, 2, 1, 2])
    loss.forward([z])
    (dz,) = loss.backward(np.array(1.0))
    np.testing.assert_allclose(dz, numeric_grad(lambda: float(loss.forward([z])), z), atol=1e-8)
    np.testing.assert_allclose(dz.sum(axis=1), 0, atol=1e-12)


def test_softmax_label_errors():
    with pytest.raises(DataError, match="out of range"):
        softmax_cross_entropy([[0.0, 1.0]], [2])
    with pytest.raises(DataError, match="integer"):
        softmax_cross_entropy([[0.0, 1.0]], np.array([0.5]))


def test_l2_examples(rng):
    assert l2_loss([[1.0], [3.0]], [0.0, 1.0]) == pytest.approx(2.5)
    loss = L2Loss("loss", ["p"])
    p = rng.normal(size=(3, 2))
    loss.labels = rng.normal(size=(3, 2))
    loss.forward([p])
    (dp,) = loss.backward(np.array(1.0))
    np.testing.assert_allclose(dp, numeric_grad(lambda: float(loss.forward([p])), p), atol=1e-8)
    with pytest.raises(ConfigurationError):
        l2_loss([[1.0, 2.0]], [1.0, 2.0, 3.0])
