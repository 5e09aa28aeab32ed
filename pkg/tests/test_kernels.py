"""Compiled extension vs pure-numpy fallback equivalence."""

import numpy as np
import pytest

from mmfuse._kernels import HAVE_COMPILED, _fallback

try:
    from mmfuse._kernels import _core
except ImportError:
    _core = None

pytestmark = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernels not built")

DTYPES = (np.float32, np.float64)


def tol(dtype):
    return dict(rtol=1e-5, atol=1e-6) if dtype == np.float32 else dict(rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("dtype", DTYPES)
def test_masked_softmax_equivalence(dtype):
    rng = np.random.default_rng(0)
    g, rpg, c = 6, 4, 9
    scores = np.ascontiguousarray(rng.normal(size=(g * rpg, c)) * 3, dtype=dtype)
    valid = (rng.random((g, c)) < 0.7).astype(np.uint8)
    valid[:, 0] = 1
    a = _core.masked_softmax(scores, valid, rpg)
    b = _fallback.masked_softmax(scores, valid, rpg)
    np.testing.assert_allclose(a, b, **tol(dtype))
    assert a.dtype == dtype
    np.testing.assert_allclose(a.sum(axis=1), 1.0, **tol(dtype))
    # masked-out columns carry zero probability
    for gi in range(g):
        for j in range(c):
            if not valid[gi, j]:
                assert np.all(a.reshape(g, rpg, c)[gi, :, j] == 0)


@pytest.mark.parametrize("dtype", DTYPES)
def test_masked_softmax_grad_equivalence(dtype):
    rng = np.random.default_rng(1)
    probs = rng.dirichlet(np.ones(7), size=20).astype(dtype)
    grad = np.ascontiguousarray(rng.normal(size=(20, 7)), dtype=dtype)
    a = _core.masked_softmax_grad(probs, grad)
    b = _fallback.masked_softmax_grad(probs, grad)
    np.testing.assert_allclose(a, b, **tol(dtype))


@pytest.mark.parametrize("dtype", DTYPES)
def test_layer_norm_equivalence(dtype):
    rng = np.random.default_rng(2)
    x = np.ascontiguousarray(rng.normal(size=(15, 11)), dtype=dtype)
    gamma = np.ascontiguousarray(rng.normal(size=11), dtype=dtype)
    beta = np.ascontiguousarray(rng.normal(size=11), dtype=dtype)
    ya, xha, rsa = _core.layer_norm(x, gamma, beta, 1e-5)
    yb, xhb, rsb = _fallback.layer_norm(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(ya, yb, **tol(dtype))
    np.testing.assert_allclose(xha, xhb, **tol(dtype))
    np.testing.assert_allclose(rsa, rsb, **tol(dtype))

    dy = np.ascontiguousarray(rng.normal(size=(15, 11)), dtype=dtype)
    dxa, dga, dba = _core.layer_norm_grad(xha, rsa, gamma, dy)
    dxb, dgb, dbb = _fallback.layer_norm_grad(xhb, rsb, gamma, dy)
    np.testing.assert_allclose(dxa, dxb, **tol(dtype))
    np.testing.assert_allclose(dga, dgb, **tol(dtype))
    np.testing.assert_allclose(dba, dbb, **tol(dtype))


def test_span_fill_equivalence():
    rng = np.random.default_rng(3)
    embs = rng.normal(size=(4, 6)).astype(np.float32)
    spans = np.array([[0, 3], [3, 3], [5, 8], [9, 10]], dtype=np.int64)
    ba, ca = _core.span_fill(embs, spans, 12)
    bb, cb = _fallback.span_fill(embs, spans, 12)
    assert np.array_equal(ba, bb)
    assert np.array_equal(ca, cb)
    assert ca[3] == 0  # zero-length span covers nothing


@pytest.mark.parametrize("dtype", DTYPES)
def test_adamw_equivalence(dtype):
    rng = np.random.default_rng(4)
    shape = (5, 7)
    state_a = [np.ascontiguousarray(rng.normal(size=shape), dtype=dtype) for _ in range(2)]
    state_a += [np.zeros(shape, dtype=dtype), np.abs(rng.normal(size=shape)).astype(dtype)]
    state_b = [s.copy() for s in state_a]
    for step in range(1, 6):
        g = np.ascontiguousarray(rng.normal(size=shape), dtype=dtype)
        _core.adamw_update(state_a[0], g, state_a[2], state_a[3], 1e-3, 0.9, 0.999, 1e-8, 0.01, step)
        _fallback.adamw_update(state_b[0], g, state_b[2], state_b[3], 1e-3, 0.9, 0.999, 1e-8, 0.01, step)
    np.testing.assert_allclose(state_a[0], state_b[0], **tol(dtype))
    np.testing.assert_allclose(state_a[2], state_b[2], **tol(dtype))
    np.testing.assert_allclose(state_a[3], state_b[3], **tol(dtype))


@pytest.mark.parametrize("dtype", DTYPES)
def test_gelu_equivalence(dtype):
    rng = np.random.default_rng(5)
    x = np.ascontiguousarray(rng.normal(size=(9, 13)) * 2, dtype=dtype)
    dy = np.ascontiguousarray(rng.normal(size=(9, 13)), dtype=dtype)
    np.testing.assert_allclose(_core.gelu(x), _fallback.gelu(x), **tol(dtype))
    np.testing.assert_allclose(_core.gelu_grad(x, dy), _fallback.gelu_grad(x, dy), **tol(dtype))


def test_force_fallback_env(tmp_path):
    import subprocess, sys
    code = (
        "import os; os.environ['MMFUSE_PURE']='1'; "
        "from mmfuse._kernels import backend_name; print(backend_name())"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert out.stdout.strip() == "fallback"
