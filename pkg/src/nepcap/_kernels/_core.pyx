# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent-cell and softmax kernels.

Drop-in twins of the functions in ``_fallback.py``; each fuses the gate
non-linearities and products into a single pass over the batch.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, log, sqrt, tanh

cnp.import_array()

cdef double PROB_FLOOR = 1e-12


cdef extern from *:
    """
    /* Single-precision forward cells in plain C.  exp is a Cephes-style polynomial
       (~1 ulp) written without branches or libm calls so the loops vectorize. */
    #include <stdint.h>
    #include <string.h>
    static inline float nepcap_expf(float x) {
        x = x > 88.37f ? 88.37f : x;
        x = x < -87.33f ? -87.33f : x;
        float n = (x * 1.44269504f + 12582912.0f) - 12582912.0f;  /* round to nearest */
        float r = x - n * 0.693359375f + n * 2.12194440e-4f;
        float z = r * r;
        float y = (((((1.9875691500e-4f * r + 1.3981999507e-3f) * r + 8.3334519073e-3f) * r
                     + 4.1665795894e-2f) * r + 1.6666665459e-1f) * r + 5.0000001201e-1f) * z + r + 1.0f;
        int32_t bits = ((int32_t)n + 127) << 23;
        float scale;
        memcpy(&scale, &bits, sizeof scale);
        return y * scale;
    }
    static inline float nepcap_sigf(float x) { return 1.0f / (1.0f + nepcap_expf(-x)); }
    static inline float nepcap_tanhf(float x) { return 2.0f / (1.0f + nepcap_expf(-2.0f * x)) - 1.0f; }

    static void nepcap_lstm_forward_f32(const float *restrict z, const float *restrict cp,
                                        float *restrict act, float *restrict c, float *restrict tc,
                                        float *restrict h, Py_ssize_t B, Py_ssize_t H) {
        for (Py_ssize_t b = 0; b < B; b++) {
            const float *zb = z + b * 4 * H, *cpb = cp + b * H;
            float *ab = act + b * 4 * H, *cb = c + b * H, *tcb = tc + b * H, *hb = h + b * H;
            for (Py_ssize_t j = 0; j < H; j++) {
                float i = nepcap_sigf(zb[j]), f = nepcap_sigf(zb[H + j]);
                float g = nepcap_tanhf(zb[2 * H + j]), o = nepcap_sigf(zb[3 * H + j]);
                ab[j] = i; ab[H + j] = f; ab[2 * H + j] = g; ab[3 * H + j] = o;
                float cc = f * cpb[j] + i * g;
                float t = nepcap_tanhf(cc);
                cb[j] = cc; tcb[j] = t; hb[j] = o * t;
            }
        }
    }

    static void nepcap_gru_forward_f32(const float *restrict xz, const float *restrict hz,
                                       const float *restrict hp, float *restrict act, float *restrict h,
                                       Py_ssize_t B, Py_ssize_t H) {
        for (Py_ssize_t b = 0; b < B; b++) {
            const float *xb = xz + b * 3 * H, *hzb = hz + b * 3 * H, *hpb = hp + b * H;
            float *ab = act + b * 3 * H, *hb = h + b * H;
            for (Py_ssize_t j = 0; j < H; j++) {
                float zg = nepcap_sigf(xb[j] + hzb[j]);
                float r = nepcap_sigf(xb[H + j] + hzb[H + j]);
                float n = nepcap_tanhf(xb[2 * H + j] + r * hzb[2 * H + j]);
                ab[j] = zg; ab[H + j] = r; ab[2 * H + j] = n;
                hb[j] = (1.0f - zg) * n + zg * hpb[j];
            }
        }
    }
    """
    void nepcap_lstm_forward_f32(const float *z, const float *cp, float *act, float *c, float *tc,
                                 float *h, Py_ssize_t B, Py_ssize_t H) nogil
    void nepcap_gru_forward_f32(const float *xz, const float *hz, const float *hp, float *act, float *h,
                                Py_ssize_t B, Py_ssize_t H) nogil


cdef inline floating _sig(floating x) noexcept nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


def lstm_cell_forward(floating[:, ::1] z, floating[:, ::1] c_prev):
    cdef Py_ssize_t B = c_prev.shape[0], H = c_prev.shape[1], b, j
    dtype = np.float64 if floating is double else np.float32
    act_a = np.empty((B, 4 * H), dtype=dtype)
    c_a = np.empty((B, H), dtype=dtype)
    tc_a = np.empty((B, H), dtype=dtype)
    h_a = np.empty((B, H), dtype=dtype)
    cdef floating[:, ::1] act = act_a
    cdef floating[:, ::1] c = c_a
    cdef floating[:, ::1] tc = tc_a
    cdef floating[:, ::1] h = h_a
    cdef floating i, f, g, o, cc, t
    if floating is float:
        if B and H:
            nepcap_lstm_forward_f32(&z[0, 0], &c_prev[0, 0], &act[0, 0], &c[0, 0], &tc[0, 0], &h[0, 0], B, H)
        return act_a, c_a, tc_a, h_a
    with nogil:
        for b in range(B):
            for j in range(H):
                i = _sig(z[b, j])
                f = _sig(z[b, H + j])
                g = tanh(z[b, 2 * H + j])
                o = _sig(z[b, 3 * H + j])
                act[b, j] = i
                act[b, H + j] = f
                act[b, 2 * H + j] = g
                act[b, 3 * H + j] = o
                cc = f * c_prev[b, j] + i * g
                t = tanh(cc)
                c[b, j] = cc
                tc[b, j] = t
                h[b, j] = o * t
    return act_a, c_a, tc_a, h_a


def lstm_cell_backward(floating[:, ::1] dh, floating[:, ::1] dc, floating[:, ::1] act,
                       floating[:, ::1] c_prev, floating[:, ::1] tanh_c):
    cdef Py_ssize_t B = c_prev.shape[0], H = c_prev.shape[1], b, j
    dtype = np.float64 if floating is double else np.float32
    dz_a = np.empty((B, 4 * H), dtype=dtype)
    dcp_a = np.empty((B, H), dtype=dtype)
    cdef floating[:, ::1] dz = dz_a
    cdef floating[:, ::1] dcp = dcp_a
    cdef floating i, f, g, o, t, dct
    with nogil:
        for b in range(B):
            for j in range(H):
                i = act[b, j]
                f = act[b, H + j]
                g = act[b, 2 * H + j]
                o = act[b, 3 * H + j]
                t = tanh_c[b, j]
                dct = dc[b, j] + dh[b, j] * o * (1.0 - t * t)
                dz[b, j] = dct * g * i * (1.0 - i)
                dz[b, H + j] = dct * c_prev[b, j] * f * (1.0 - f)
                dz[b, 2 * H + j] = dct * i * (1.0 - g * g)
                dz[b, 3 * H + j] = dh[b, j] * t * o * (1.0 - o)
                dcp[b, j] = dct * f
    return dz_a, dcp_a


def gru_cell_forward(floating[:, ::1] xz, floating[:, ::1] hz, floating[:, ::1] h_prev):
    cdef Py_ssize_t B = h_prev.shape[0], H = h_prev.shape[1], b, j
    dtype = np.float64 if floating is double else np.float32
    act_a = np.empty((B, 3 * H), dtype=dtype)
    h_a = np.empty((B, H), dtype=dtype)
    cdef floating[:, ::1] act = act_a
    cdef floating[:, ::1] h = h_a
    cdef floating zg, r, n
    if floating is float:
        if B and H:
            nepcap_gru_forward_f32(&xz[0, 0], &hz[0, 0], &h_prev[0, 0], &act[0, 0], &h[0, 0], B, H)
        return act_a, h_a
    with nogil:
        for b in range(B):
            for j in range(H):
                zg = _sig(xz[b, j] + hz[b, j])
                r = _sig(xz[b, H + j] + hz[b, H + j])
                n = tanh(xz[b, 2 * H + j] + r * hz[b, 2 * H + j])
                act[b, j] = zg
                act[b, H + j] = r
                act[b, 2 * H + j] = n
                h[b, j] = (1.0 - zg) * n + zg * h_prev[b, j]
    return act_a, h_a


def gru_cell_backward(floating[:, ::1] dh, floating[:, ::1] act, floating[:, ::1] hz,
                      floating[:, ::1] h_prev):
    cdef Py_ssize_t B = h_prev.shape[0], H = h_prev.shape[1], b, j
    dtype = np.float64 if floating is double else np.float32
    dxz_a = np.empty((B, 3 * H), dtype=dtype)
    dhz_a = np.empty((B, 3 * H), dtype=dtype)
    dhp_a = np.empty((B, H), dtype=dtype)
    cdef floating[:, ::1] dxz = dxz_a
    cdef floating[:, ::1] dhz = dhz_a
    cdef floating[:, ::1] dhp = dhp_a
    cdef floating zg, r, n, d, dpn, dpz, dpr
    with nogil:
        for b in range(B):
            for j in range(H):
                zg = act[b, j]
                r = act[b, H + j]
                n = act[b, 2 * H + j]
                d = dh[b, j]
                dpn = d * (1.0 - zg) * (1.0 - n * n)
                dpz = d * (h_prev[b, j] - n) * zg * (1.0 - zg)
                dpr = dpn * hz[b, 2 * H + j] * r * (1.0 - r)
                dxz[b, j] = dpz
                dxz[b, H + j] = dpr
                dxz[b, 2 * H + j] = dpn
                dhz[b, j] = dpz
                dhz[b, H + j] = dpr
                dhz[b, 2 * H + j] = dpn * r
                dhp[b, j] = d * zg
    return dxz_a, dhz_a, dhp_a


def softmax_xent(floating[:, ::1] logits, cnp.int64_t[::1] targets, floating[::1] weights):
    cdef Py_ssize_t N = logits.shape[0], V = logits.shape[1], n, v
    dtype = np.float64 if floating is double else np.float32
    probs_a = np.empty((N, V), dtype=dtype)
    nll_a = np.empty(N, dtype=dtype)
    dl_a = np.empty((N, V), dtype=dtype)
    cdef floating[:, ::1] probs = probs_a
    cdef floating[::1] nll = nll_a
    cdef floating[:, ::1] dl = dl_a
    cdef floating mx, s, p_t, w
    cdef Py_ssize_t t
    with nogil:
        for n in range(N):
            mx = logits[n, 0]
            for v in range(1, V):
                if logits[n, v] > mx:
                    mx = logits[n, v]
            s = 0.0
            for v in range(V):
                probs[n, v] = exp(logits[n, v] - mx)
                s = s + probs[n, v]
            for v in range(V):
                probs[n, v] = probs[n, v] / s
            t = targets[n]
            p_t = probs[n, t]
            if p_t > PROB_FLOOR:
                nll[n] = -log(p_t) if p_t < 1.0 else 0.0
                w = weights[n]
            else:
                nll[n] = -log(PROB_FLOOR)
                w = 0.0
            for v in range(V):
                dl[n, v] = probs[n, v] * w
            dl[n, t] = dl[n, t] - w
    return probs_a, nll_a, dl_a


def adam_update(floating[::1] param, floating[::1] grad, floating[::1] m, floating[::1] v,
                double lr, double beta1, double beta2, double eps, double bc1, double bc2):
    cdef Py_ssize_t n = param.shape[0], k
    cdef floating g, mk, vk
    cdef floating b1 = beta1, b2 = beta2, c1 = 1.0 - beta1, c2 = 1.0 - beta2
    cdef floating step = lr / bc1, inv_bc2 = 1.0 / bc2, e = eps
    with nogil:
        for k in range(n):
            g = grad[k]
            mk = b1 * m[k] + c1 * g
            vk = b2 * v[k] + c2 * g * g
            m[k] = mk
            v[k] = vk
            param[k] = param[k] - step * mk / (sqrt(vk * inv_bc2) + e)
