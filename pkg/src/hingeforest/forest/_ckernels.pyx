# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled traversal and gradient scatter for hinge trees and ferns."""
from libc.math cimport fabs
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t index_t

ctypedef fused real:
    float
    double


def traverse(real[:, ::1] x, index_t[:, ::1] feature_index, real[:, ::1] thresholds,
             int depth, bint fern, index_t[:, ::1] leaf, real[:, ::1] margin,
             index_t[:, ::1] vertex):
    cdef Py_ssize_t n_examples = x.shape[0]
    cdef Py_ssize_t n_trees = feature_index.shape[0]
    cdef Py_ssize_t n, m
    cdef int level
    cdef index_t v, node, best_v, lf, right
    cdef real r, best_r
    cdef long long count = 0
    with nogil:
        for m in range(n_trees):
            for n in range(n_examples):
                lf = 0
                v = 0
                node = 0
                best_v = 0
                best_r = x[n, feature_index[m, 0]] - thresholds[m, 0]
                for level in range(depth):
                    node = level if fern else v
                    r = x[n, feature_index[m, node]] - thresholds[m, node]
                    count += 1
                    if fabs(r) < fabs(best_r):
                        best_r = r
                        best_v = node
                    right = 1 if r > 0 else 0
                    lf = 2 * lf + right
                    v = 2 * v + right + 1
                leaf[n, m] = lf
                margin[n, m] = best_r
                vertex[n, m] = best_v
    return count


def backward(real[:, :, ::1] grad, index_t[:, ::1] leaf, real[:, ::1] margin,
             index_t[:, ::1] vertex, index_t[:, ::1] feature_index,
             real[:, :, ::1] leaf_weights, real[:, ::1] input_grad,
             real[:, ::1] threshold_grad, real[:, :, ::1] leaf_grad):
    cdef Py_ssize_t n_examples = leaf.shape[0]
    cdef Py_ssize_t n_trees = leaf.shape[1]
    cdef Py_ssize_t n_out = grad.shape[2]
    cdef Py_ssize_t n, m, k
    cdef index_t lf, v
    cdef real r, dot, c, a
    with nogil:
        for m in range(n_trees):
            for n in range(n_examples):
                r = margin[n, m]
                if r == 0:
                    continue
                lf = leaf[n, m]
                v = vertex[n, m]
                dot = 0
                for k in range(n_out):
                    dot = dot + grad[n, m, k] * leaf_weights[m, lf, k]
                c = dot if r > 0 else -dot
                input_grad[n, feature_index[m, v]] += c
                threshold_grad[m, v] -= c
                a = fabs(r)
                for k in range(n_out):
                    leaf_grad[m, lf, k] += grad[n, m, k] * a
