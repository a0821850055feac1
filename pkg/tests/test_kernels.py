import subprocess
import sys

import numpy as np
import pytest

from nepcap import _kernels as K

needs_ext = pytest.mark.skipif(not K.compiled_available(), reason="compiled kernels not built")
DTYPES = [np.float32, np.float64]
TOL = {np.float32: 2e-6, np.float64: 1e-13}


def _rand(rng, shape, dtype, scale=2.0):
    return (rng.normal(size=shape) * scale).astype(dtype)


def _close(a, b, dtype):
    assert a.dtype == b.dtype == dtype
    np.testing.assert_allclose(a, b, rtol=TOL[dtype], atol=TOL[dtype])


@pytest.fixture
def py():
    return K.get_backend("python")


@pytest.fixture
def cy():
    return K.get_backend("cython")


@needs_ext
@pytest.mark.parametrize("dtype", DTYPES)
def test_lstm_cell_equivalence(py, cy, dtype):
    rng = np.random.default_rng(0)
    z, c = _rand(rng, (5, 28), dtype), _rand(rng, (5, 7), dtype)
    out_py, out_cy = py.lstm_cell_forward(z, c), cy.lstm_cell_forward(z, c)
    for a, b in zip(out_py, out_cy):
        _close(a, b, dtype)
    act, _, tc, _ = out_py
    dh, dc = _rand(rng, (5, 7), dtype), _rand(rng, (5, 7), dtype)
    for a, b in zip(py.lstm_cell_backward(dh, dc, act, c, tc), cy.lstm_cell_backward(dh, dc, act, c, tc)):
        _close(a, b, dtype)


@needs_ext
@pytest.mark.parametrize("dtype", DTYPES)
def test_gru_cell_equivalence(py, cy, dtype):
    rng = np.random.default_rng(1)
    xz, hz, h = _rand(rng, (4, 18), dtype), _rand(rng, (4, 18), dtype), _rand(rng, (4, 6), dtype, 0.5)
    out_py, out_cy = py.gru_cell_forward(xz, hz, h), cy.gru_cell_forward(xz, hz, h)
    for a, b in zip(out_py, out_cy):
        _close(a, b, dtype)
    dh = _rand(rng, (4, 6), dtype)
    act = out_py[0]
    for a, b in zip(py.gru_cell_backward(dh, act, hz, h), cy.gru_cell_backward(dh, act, hz, h)):
        _close(a, b, dtype)


@needs_ext
@pytest.mark.parametrize("dtype", DTYPES)
def test_softmax_xent_equivalence(py, cy, dtype):
    rng = np.random.default_rng(2)
    logits = _rand(rng, (12, 9), dtype, 5.0)
    logits[0, 3] = 80  # drives other probabilities below the clipping floor
    targets = rng.integers(0, 9, 12)
    targets[0] = 0
    weights = (rng.random(12) > 0.3).astype(dtype)
    for a, b in zip(py.softmax_xent(logits, targets, weights), cy.softmax_xent(logits, targets, weights)):
        _close(a, b, dtype)


@needs_ext
@pytest.mark.parametrize("dtype", DTYPES)
def test_adam_equivalence(py, cy, dtype):
    rng = np.random.default_rng(3)
    arrays = [_rand(rng, 100, dtype) for _ in range(2)] + [np.zeros(100, dtype), np.zeros(100, dtype)]
    twins = [a.copy() for a in arrays]
    for t in range(1, 4):
        bc1, bc2 = 1 - 0.9**t, 1 - 0.999**t
        py.adam_update(*arrays, 1e-3, 0.9, 0.999, 1e-8, bc1, bc2)
        cy.adam_update(*twins, 1e-3, 0.9, 0.999, 1e-8, bc1, bc2)
    for a, b in zip(arrays, twins):
        _close(a, b, dtype)


def test_softmax_xent_reference(backend):
    logits = np.array([[0.0, 1.0, 2.0], [5.0, 5.0, 5.0]])
    probs, nll, dl = K.softmax_xent(logits, np.array([2, 0]), np.array([1.0, 0.0]))
    e = np.exp([0.0, 1.0, 2.0])
    assert np.allclose(probs[0], e / e.sum()) and np.allclose(probs[1], 1 / 3)
    assert nll[0] == pytest.approx(-np.log(e[2] / e.sum()))
    assert np.allclose(dl[0], probs[0] - [0, 0, 1]) and np.all(dl[1] == 0)


def test_wrapper_accepts_non_contiguous(backend):
    z = np.random.default_rng(0).normal(size=(8, 3)).T  # (3, 8) Fortran-ordered view
    c = np.zeros((3, 2))
    act, c_new, tanh_c, h = K.lstm_cell_forward(z, c)
    assert h.shape == (3, 2) and np.allclose(tanh_c, np.tanh(c_new))


def test_get_backend_unknown():
    with pytest.raises(ValueError):
        K.get_backend("fortran")


def test_env_forces_fallback():
    code = "import nepcap._kernels as K; print(K.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={"NEPCAP_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True
    )
    assert out.stdout.strip() == "python"


@needs_ext
def test_float32_cells_extreme_inputs(py, cy):
    # the compiled float32 path uses its own exp; check saturation and non-finite propagation
    x = np.concatenate([np.linspace(-120, 120, 4001), [0.0, -0.0, 1e-30, np.inf, -np.inf, np.nan, 3e38]])
    x = x.astype(np.float32)[:4004]
    z, c = x.reshape(1, -1), np.linspace(-3, 3, 1001, dtype=np.float32).reshape(1, -1)
    for a, b in zip(py.lstm_cell_forward(z, c), cy.lstm_cell_forward(z, c)):
        assert np.array_equal(np.isnan(a), np.isnan(b))
        finite = np.isfinite(a)
        assert np.abs(a[finite] - b[finite]).max() <= 5e-7
    xz, hz = x[:3003].reshape(1, -1), np.ones((1, 3003), np.float32)
    for a, b in zip(py.gru_cell_forward(xz, hz, c), cy.gru_cell_forward(xz, hz, c)):
        assert np.array_equal(np.isnan(a), np.isnan(b))
        finite = np.isfinite(a)
        assert np.abs(a[finite] - b[finite]).max() <= 5e-7
