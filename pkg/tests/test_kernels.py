import os
import subprocess
import sys

import numpy as np
import pytest

from semrec import _pykernels, kernels

try:
    from semrec import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


def random_csr(rng, n_windows, width, density=0.3):
    indptr = [0]
    indices, values = [], []
    for _ in range(n_windows):
        cols = np.nonzero(rng.random(width) < density)[0]
        indices.extend(cols)
        values.extend(rng.standard_normal(cols.size))
        indptr.append(len(indices))
    return np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64), np.array(values, dtype=np.float64)


def dense_reference(indptr, indices, values, W, b):
    X = np.zeros((len(indptr) - 1, W.shape[1]))
    for t in range(X.shape[0]):
        X[t, indices[indptr[t]:indptr[t + 1]]] = values[indptr[t]:indptr[t + 1]]
    Z = W @ X.T + b[:, None]
    arg = Z.argmax(axis=1)
    return np.tanh(Z.max(axis=1)), arg, X


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestConvPool:
    def test_forward_matches_dense(self, mod):
        rng = np.random.default_rng(0)
        for trial in range(30):
            n_f, width, n_w = rng.integers(1, 8), rng.integers(1, 20), rng.integers(1, 10)
            indptr, indices, values = random_csr(rng, n_w, width)
            W, b = rng.standard_normal((n_f, width)), rng.standard_normal(n_f)
            pooled, arg = mod.conv_pool_forward(indptr, indices, values, W, b)
            ref_pooled, ref_arg, _ = dense_reference(indptr, indices, values, W, b)
            np.testing.assert_allclose(pooled, ref_pooled, rtol=0, atol=1e-14)
            np.testing.assert_array_equal(arg, ref_arg)

    def test_backward_matches_dense(self, mod):
        rng = np.random.default_rng(1)
        for trial in range(30):
            n_f, width, n_w = rng.integers(1, 8), rng.integers(1, 20), rng.integers(1, 10)
            indptr, indices, values = random_csr(rng, n_w, width)
            W, b = rng.standard_normal((n_f, width)), rng.standard_normal(n_f)
            _, arg = mod.conv_pool_forward(indptr, indices, values, W, b)
            g = rng.standard_normal(n_f)
            dW, db = np.zeros_like(W), np.zeros_like(b)
            mod.conv_pool_backward(indptr, indices, values, arg, g, dW, db)
            _, _, X = dense_reference(indptr, indices, values, W, b)
            np.testing.assert_allclose(dW, g[:, None] * X[arg], atol=1e-14)
            np.testing.assert_array_equal(db, g)

    def test_ties_go_to_lowest_window(self, mod):
        indptr = np.array([0, 0, 0, 0], dtype=np.int64)
        empty_i, empty_v = np.zeros(0, dtype=np.int64), np.zeros(0)
        _, arg = mod.conv_pool_forward(indptr, empty_i, empty_v, np.ones((3, 2)), np.zeros(3))
        np.testing.assert_array_equal(arg, [0, 0, 0])

    def test_nan_propagates(self, mod):
        indptr = np.array([0, 1, 2], dtype=np.int64)
        indices = np.array([0, 0], dtype=np.int64)
        values = np.array([1.0, np.nan])
        pooled, _ = mod.conv_pool_forward(indptr, indices, values, np.ones((2, 1)), np.zeros(2))
        assert np.all(np.isnan(pooled))

    def test_rejects_no_windows(self, mod):
        with pytest.raises(ValueError):
            mod.conv_pool_forward(np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0),
                                  np.ones((2, 2)), np.zeros(2))

    def test_rejects_out_of_range_column(self, mod):
        with pytest.raises((ValueError, IndexError)):
            mod.conv_pool_forward(np.array([0, 1], dtype=np.int64), np.array([5], dtype=np.int64),
                                  np.ones(1), np.ones((2, 2)), np.zeros(2))


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestFnv1a:
    # published FNV-1a 64-bit test vectors
    @pytest.mark.parametrize("data,expected", [
        (b"", 0xCBF29CE484222325),
        (b"a", 0xAF63DC4C8601EC8C),
        (b"foobar", 0x85944171F73967E8),
    ])
    def test_known_vectors(self, mod, data, expected):
        assert mod.fnv1a64(data) == expected


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
def test_backends_agree_on_long_input():
    data = bytes(range(256)) * 50
    assert _ckernels.fnv1a64(data) == _pykernels.fnv1a64(data)


def test_pure_python_switch():
    env = dict(os.environ, SEMREC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from semrec import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_name():
    assert kernels.BACKEND in ("python", "cython")
