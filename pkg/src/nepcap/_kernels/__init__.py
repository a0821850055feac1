"""Hot inner-loop kernels, compiled when available.

The Cython extension ``_core`` is used if it was built and imports cleanly;
otherwise the numpy versions in ``_fallback`` are used.  Setting
``NEPCAP_PURE_PYTHON=1`` forces the fallback.
"""

import os

import numpy as np

from . import _fallback

try:
    if os.environ.get("NEPCAP_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _core as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _fallback
    BACKEND = "python"


def compiled_available():
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"cython"``/``"python"``)."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a)


def lstm_cell_forward(z, c_prev):
    return _impl.lstm_cell_forward(_c(z), _c(c_prev))


def lstm_cell_backward(dh, dc, act, c_prev, tanh_c):
    return _impl.lstm_cell_backward(_c(dh), _c(dc), _c(act), _c(c_prev), _c(tanh_c))


def gru_cell_forward(xz, hz, h_prev):
    return _impl.gru_cell_forward(_c(xz), _c(hz), _c(h_prev))


def gru_cell_backward(dh, act, hz, h_prev):
    return _impl.gru_cell_backward(_c(dh), _c(act), _c(hz), _c(h_prev))


def softmax_xent(logits, targets, weights):
    logits = _c(logits)
    return _impl.softmax_xent(
        logits,
        np.ascontiguousarray(targets, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=logits.dtype),
    )


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place; every array must be C-contiguous and share one dtype."""
    _impl.adam_update(
        param.reshape(-1), np.ascontiguousarray(grad, dtype=param.dtype).reshape(-1),
        m.reshape(-1), v.reshape(-1), lr, beta1, beta2, eps, bc1, bc2,
    )
