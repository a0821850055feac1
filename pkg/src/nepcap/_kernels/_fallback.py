"""Numpy reference versions of the recurrent-cell and softmax kernels.

Every function here has a compiled twin in ``_core.pyx`` with the same
signature and the same outputs (up to float rounding).  Gate layouts:

* LSTM pre-activations ``z`` are ``(B, 4H)`` in order ``[i, f, g, o]``.
* GRU projections ``xz``/``hz`` are ``(B, 3H)`` in order ``[z, r, n]``;
  the reset gate is applied after the recurrent projection.
"""

import numpy as np

PROB_FLOOR = 1e-12


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_cell_forward(z, c_prev):
    """Return ``(act, c, tanh_c, h)`` for one LSTM step."""
    H = c_prev.shape[1]
    act = np.empty_like(z)
    act[:, : 2 * H] = _sigmoid(z[:, : 2 * H])
    act[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
    act[:, 3 * H :] = _sigmoid(z[:, 3 * H :])
    i, f, g, o = act[:, :H], act[:, H : 2 * H], act[:, 2 * H : 3 * H], act[:, 3 * H :]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return act, c, tanh_c, h


def lstm_cell_backward(dh, dc, act, c_prev, tanh_c):
    """Return ``(dz, dc_prev)`` given gradients flowing into ``h`` and ``c``."""
    H = c_prev.shape[1]
    i, f, g, o = act[:, :H], act[:, H : 2 * H], act[:, 2 * H : 3 * H], act[:, 3 * H :]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(act)
    dz[:, :H] = dc_total * g * i * (1.0 - i)
    dz[:, H : 2 * H] = dc_total * c_prev * f * (1.0 - f)
    dz[:, 2 * H : 3 * H] = dc_total * i * (1.0 - g * g)
    dz[:, 3 * H :] = dh * tanh_c * o * (1.0 - o)
    return dz, dc_total * f


def gru_cell_forward(xz, hz, h_prev):
    """Return ``(act, h)`` for one GRU step; ``act`` holds ``[z, r, n]``."""
    H = h_prev.shape[1]
    act = np.empty_like(xz)
    act[:, : 2 * H] = _sigmoid(xz[:, : 2 * H] + hz[:, : 2 * H])
    r = act[:, H : 2 * H]
    act[:, 2 * H :] = np.tanh(xz[:, 2 * H :] + r * hz[:, 2 * H :])
    zg, n = act[:, :H], act[:, 2 * H :]
    h = (1.0 - zg) * n + zg * h_prev
    return act, h


def gru_cell_backward(dh, act, hz, h_prev):
    """Return ``(dxz, dhz, dh_prev_direct)``.

    ``dh_prev_direct`` is only the gradient through the update-gate mix; the
    caller adds ``dhz @ Wh.T`` for the path through the recurrent projection.
    """
    H = h_prev.shape[1]
    zg, r, n = act[:, :H], act[:, H : 2 * H], act[:, 2 * H :]
    dpre_n = dh * (1.0 - zg) * (1.0 - n * n)
    dxz = np.empty_like(act)
    dhz = np.empty_like(act)
    dxz[:, :H] = dh * (h_prev - n) * zg * (1.0 - zg)
    dxz[:, H : 2 * H] = dpre_n * hz[:, 2 * H :] * r * (1.0 - r)
    dxz[:, 2 * H :] = dpre_n
    dhz[:, : 2 * H] = dxz[:, : 2 * H]
    dhz[:, 2 * H :] = dpre_n * r
    return dxz, dhz, dh * zg


def softmax_xent(logits, targets, weights):
    """Row softmax plus clipped negative log-likelihood.

    Returns ``(probs, nll, dlogits)``.  ``nll`` is per row and unweighted;
    ``dlogits`` is weighted by ``weights`` but not normalised.  Rows whose
    target probability sits below the clip floor get zero gradient, matching
    the derivative of ``-log(max(p, floor))``.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    rows = np.arange(len(targets))
    p_t = probs[rows, targets]
    nll = -np.log(np.clip(p_t, PROB_FLOOR, 1.0))
    w = np.where(p_t > PROB_FLOOR, weights, 0.0).astype(probs.dtype)
    dlogits = probs * w[:, None]
    dlogits[rows, targets] -= w
    return probs, nll, dlogits


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    """In-place Adam step on flat arrays; ``bc1``/``bc2`` are the bias corrections ``1 - beta**t``."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
