# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sparse convolution + max-pool kernels.

Window vectors arrive in CSR form (indptr, indices, values); each filter is a
dense row of ``W``.  The numpy fallback in ``_pykernels`` has identical
semantics: argmax over pre-activations, ties to the lowest window index,
NaN propagated.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, INFINITY

cnp.import_array()


def conv_pool_forward(const cnp.int64_t[::1] indptr,
                      const cnp.int64_t[::1] indices,
                      const double[::1] values,
                      const double[:, ::1] W,
                      const double[::1] b):
    cdef Py_ssize_t n_f = W.shape[0]
    cdef Py_ssize_t n_w = indptr.shape[0] - 1
    cdef Py_ssize_t t, f, j
    cdef double acc
    if n_w < 1:
        raise ValueError("no windows to pool over")
    if b.shape[0] != n_f:
        raise ValueError("bias length does not match filter count")
    if indices.shape[0] and np.max(indices) >= W.shape[1]:
        raise ValueError("window index out of range for the filter width")
    z = np.full(n_f, -INFINITY)
    arg = np.zeros(n_f, dtype=np.int64)
    cdef double[::1] zb = z
    cdef cnp.int64_t[::1] ab = arg
    with nogil:
        for t in range(n_w):
            for f in range(n_f):
                acc = b[f]
                for j in range(indptr[t], indptr[t + 1]):
                    acc = acc + W[f, indices[j]] * values[j]
                if acc > zb[f] or (acc != acc and zb[f] == zb[f]):
                    zb[f] = acc
                    ab[f] = t
    pooled = np.empty(n_f)
    cdef double[::1] pb = pooled
    with nogil:
        for f in range(n_f):
            pb[f] = tanh(zb[f])
    return pooled, arg


def conv_pool_backward(const cnp.int64_t[::1] indptr,
                       const cnp.int64_t[::1] indices,
                       const double[::1] values,
                       const cnp.int64_t[::1] argmax,
                       const double[::1] g,
                       double[:, ::1] dW,
                       double[::1] db):
    """Accumulate ``g`` (gradient w.r.t. pooled pre-activations) into dW, db."""
    cdef Py_ssize_t n_f = dW.shape[0]
    cdef Py_ssize_t f, j, t
    cdef double gf
    with nogil:
        for f in range(n_f):
            gf = g[f]
            if gf == 0.0:
                continue
            t = argmax[f]
            db[f] += gf
            for j in range(indptr[t], indptr[t + 1]):
                dW[f, indices[j]] += gf * values[j]


def fnv1a64(const unsigned char[::1] data):
    cdef cnp.uint64_t h = 0xcbf29ce484222325ULL
    cdef Py_ssize_t i
    with nogil:
        for i in range(data.shape[0]):
            h = (h ^ data[i]) * 0x100000001b3ULL
    return int(h)
