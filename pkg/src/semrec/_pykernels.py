"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def conv_pool_forward(indptr, indices, values, W, b):
    n_w = indptr.shape[0] - 1
    if n_w < 1:
        raise ValueError("no windows to pool over")
    if b.shape[0] != W.shape[0]:
        raise ValueError("bias length does not match filter count")
    if indices.size and indices.max() >= W.shape[1]:
        raise ValueError("window index out of range for the filter width")
    contrib = W[:, indices] * values
    z = np.zeros((W.shape[0], n_w))
    for t in range(n_w):
        lo, hi = indptr[t], indptr[t + 1]
        if hi > lo:
            z[:, t] = contrib[:, lo:hi].sum(axis=1)
    z += b[:, None]
    arg = np.argmax(z, axis=1).astype(np.int64)
    pooled = np.tanh(z[np.arange(z.shape[0]), arg])
    return pooled, arg


def conv_pool_backward(indptr, indices, values, argmax, g, dW, db):
    db += g
    for t in np.unique(argmax):
        fs = np.nonzero((argmax == t) & (g != 0.0))[0]
        lo, hi = indptr[t], indptr[t + 1]
        if fs.size and hi > lo:
            dW[np.ix_(fs, indices[lo:hi])] += np.outer(g[fs], values[lo:hi])


def fnv1a64(data):
    h = 0xCBF29CE484222325
    for byte in bytes(data):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
