"""Batched traversal and gradient scatter in numpy.

Used when the compiled extension is unavailable.  Every function here has a
counterpart with the same signature in ``_ckernels.pyx``.
"""
import numpy as np


def traverse(x, feature_index, thresholds, depth, fern, leaf, margin, vertex):
    """Fill ``leaf``, ``margin`` and ``vertex`` (all ``(N, M)``) in place.

    Returns the number of decisions evaluated.
    """
    n, _ = x.shape
    m = feature_index.shape[0]
    rows = np.arange(n)[:, None]
    trees = np.arange(m)[None, :]
    v = np.zeros((n, m), dtype=np.int64)
    leaf[...] = 0
    count = 0
    for level in range(depth):
        node = np.full((n, m), level, dtype=np.int64) if fern else v
        r = x[rows, feature_index[trees, node]] - thresholds[trees, node]
        count += r.size
        if level == 0:
            margin[...] = r
            vertex[...] = node
        else:
            closer = np.abs(r) < np.abs(margin)
            np.copyto(margin, r, where=closer)
            np.copyto(vertex, node, where=closer)
        right = (r > 0).astype(np.int64)
        leaf *= 2
        leaf += right
        if not fern:
            v = 2 * v + right + 1
    return count


def backward(grad, leaf, margin, vertex, feature_index, leaf_weights,
             input_grad, threshold_grad, leaf_grad):
    """Accumulate forest gradients in place, tree by tree in example order."""
    n, m = leaf.shape
    trees = np.arange(m)[None, :]
    w = leaf_weights[trees, leaf]                                  # (N, M, K)
    coef = np.einsum("nmk,nmk->nm", grad, w) * np.sign(margin)
    # transpose so np.add.at walks trees in the outer loop, examples inner
    coef_t = coef.T.ravel()
    v_t = vertex.T.ravel()
    m_t = np.repeat(np.arange(m), n)
    n_t = np.tile(np.arange(n), m)
    np.add.at(input_grad, (n_t, feature_index[m_t, v_t]), coef_t)
    np.add.at(threshold_grad, (m_t, v_t), -coef_t)
    scaled = grad * np.abs(margin)[:, :, None]
    np.add.at(leaf_grad, (m_t, leaf.T.ravel()), scaled.transpose(1, 0, 2).reshape(n * m, -1))
