"""Sequence-level LSTM/GRU passes with hand-written backpropagation through time.

Input projections are computed by the caller for the whole sequence at once;
these functions only run the recurrence.  Shapes: ``xproj`` is
``(B, T, G*H)``, hidden outputs are ``(B, T, H)``.  Recurrent-weight
gradients are formed in a single product over all steps by the caller
(see :func:`recurrent_grad`).
"""

import numpy as np

from .. import _kernels as K


def lstm_forward(xproj, Wh, h0, c0):
    """Return ``(hs, (h_T, c_T), cache)``."""
    B, T, _ = xproj.shape
    H = Wh.shape[0]
    hs = np.empty((B, T, H), dtype=xproj.dtype)
    steps = []
    h, c = h0, c0
    WhT = np.ascontiguousarray(Wh.T)
    for t in range(T):
        z = xproj[:, t] + _rec(h, WhT)
        act, c_new, tanh_c, h = K.lstm_cell_forward(z, c)
        steps.append((act, c, tanh_c))
        hs[:, t] = h
        c = c_new
    return hs, (h, c), (steps, h0, hs)


def lstm_backward(dhs, dh_last, dc_last, cache, Wh):
    """Return ``(dxproj, dWh, dh0, dc0)``."""
    steps, h0, hs = cache
    B, T, H = dhs.shape
    dxproj = np.empty((B, T, 4 * H), dtype=dhs.dtype)
    dh_next, dc_next = dh_last, dc_last
    for t in range(T - 1, -1, -1):
        act, c_prev, tanh_c = steps[t]
        dz, dc_next = K.lstm_cell_backward(dhs[:, t] + dh_next, dc_next, act, c_prev, tanh_c)
        dxproj[:, t] = dz
        dh_next = _rec_back(dz, Wh)
    return dxproj, recurrent_grad(hs, h0, dxproj), dh_next, dc_next


def gru_forward(xproj, Wh, bh, h0):
    """Return ``(hs, h_T, cache)``."""
    B, T, _ = xproj.shape
    H = Wh.shape[0]
    hs = np.empty((B, T, H), dtype=xproj.dtype)
    steps = []
    h = h0
    WhT = np.ascontiguousarray(Wh.T)
    for t in range(T):
        hz = _rec(h, WhT) + bh
        act, h_new = K.gru_cell_forward(xproj[:, t], hz, h)
        steps.append((act, hz, h))
        hs[:, t] = h_new
        h = h_new
    return hs, h, (steps, h0, hs)


def gru_backward(dhs, dh_last, cache, Wh):
    """Return ``(dxproj, dWh, dbh, dh0)``."""
    steps, h0, hs = cache
    B, T, H = dhs.shape
    dxproj = np.empty((B, T, 3 * H), dtype=dhs.dtype)
    dhz_all = np.empty((B, T, 3 * H), dtype=dhs.dtype)
    dh_next = dh_last
    for t in range(T - 1, -1, -1):
        act, hz, h_prev = steps[t]
        dxz, dhz, dh_direct = K.gru_cell_backward(dhs[:, t] + dh_next, act, hz, h_prev)
        dxproj[:, t] = dxz
        dhz_all[:, t] = dhz
        dh_next = dh_direct + _rec_back(dhz, Wh)
    dWh = recurrent_grad(hs, h0, dhz_all)
    dbh = dhz_all.sum(axis=(0, 1))
    return dxproj, dWh, dbh, dh_next


def _rec(h, WhT):
    # h @ Wh, laid out so BLAS streams the weight matrix row-wise; about 2x
    # faster than the direct product for the small batch sizes used here
    return (WhT @ h.T).T


def _rec_back(dpre, Wh):
    return (Wh @ dpre.T).T


def recurrent_grad(hs, h0, dpre):
    """``sum_t h_{t-1}^T dpre_t`` as one matrix product."""
    h_prev = np.concatenate([h0[:, None], hs[:, :-1]], axis=1)
    return h_prev.reshape(-1, hs.shape[2]).T @ dpre.reshape(-1, dpre.shape[2])
