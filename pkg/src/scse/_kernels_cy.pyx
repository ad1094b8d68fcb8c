# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cython implementation of the state-evolution hot kernels.

Identical panel layout to _kernels_numpy.py (the NumPy fallback); the two
are cross-checked in the test suite.  See that module's docstring for the
derivation of the C(rho, qhat) integral and the panel-sizing rules.
"""

from libc.math cimport exp, sqrt, log, log1p, ceil

import numpy as np

cdef double Z_MAX = 12.0
cdef int N_Z_PANELS = 16
cdef double Q_SWITCH = 1.0
cdef double CUT = 45.0
cdef double EDGE_RES = 2.5
cdef double SQRT_2_OVER_PI = 0.7978845608028654


cdef inline double _sigmoid_of_neg(double arg) nogil:
    # 1 / (1 + exp(arg)) without overflow
    cdef double e
    if arg > 0.0:
        e = exp(-arg)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(arg))


cdef double _c_one(double rho, double qhat, double lam,
                   double[::1] gl_x, double[::1] gl_w, int mult) nogil:
    cdef int m = gl_x.shape[0]
    cdef int n, n_s, n_e, i, k
    cdef double acc = 0.0
    cdef double lo, wid, z, u, f
    cdef double lam_pos, ustar, ucap, ulo, width, w_s_panel, w_e_panel

    if qhat <= Q_SWITCH:
        n = N_Z_PANELS * mult
        wid = Z_MAX / n
        for i in range(n):
            lo = i * wid
            for k in range(m):
                z = lo + wid * gl_x[k]
                f = z * z * exp(-0.5 * z * z) * _sigmoid_of_neg(0.5 * z * z * qhat - lam)
                acc += wid * gl_w[k] * f
        return SQRT_2_OVER_PI * acc

    lam_pos = lam if lam > 0.0 else 0.0
    ustar = sqrt(2.0 * lam_pos)
    ucap = sqrt(2.0 * lam_pos + 2.0 * CUT)
    u = sqrt(2.0 * CUT * qhat)
    if u < ucap:
        ucap = u
    if lam > CUT:
        # clamp to ucap: at absurdly small rho the Gaussian cutoff can sit
        # below the sigmoid edge, and the smooth region carries everything
        ulo = sqrt(2.0 * (lam - CUT))
        if ulo > ucap:
            ulo = ucap
        n_s = 4 * mult
        w_s_panel = ulo / n_s
    else:
        ulo = 0.0
        n_s = 0
        w_s_panel = 0.0
    width = EDGE_RES / (ustar if ustar > 1.4 else 1.4)
    n_e = <int>ceil((ucap - ulo) / width)
    if n_e < 1:
        n_e = 1
    n_e = n_e * mult
    w_e_panel = (ucap - ulo) / n_e

    for i in range(n_s):
        lo = i * w_s_panel
        for k in range(m):
            u = lo + w_s_panel * gl_x[k]
            f = u * u * exp(-0.5 * u * u / qhat) * _sigmoid_of_neg(0.5 * u * u - lam)
            acc += w_s_panel * gl_w[k] * f
    for i in range(n_e):
        lo = ulo + i * w_e_panel
        for k in range(m):
            u = lo + w_e_panel * gl_x[k]
            f = u * u * exp(-0.5 * u * u / qhat) * _sigmoid_of_neg(0.5 * u * u - lam)
            acc += w_e_panel * gl_w[k] * f
    return SQRT_2_OVER_PI * acc / (qhat * sqrt(qhat))


def c_values(double rho, double[::1] qhat, double[::1] gl_x, double[::1] gl_w,
             int mult=1):
    """C(rho, qhat_i) for an array of qhat values."""
    cdef Py_ssize_t n = qhat.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double lam0, q
    if rho == 1.0:
        out_arr.fill(0.0)
        return out_arr
    lam0 = log((1.0 - rho) / rho)
    with nogil:
        for i in range(n):
            q = qhat[i]
            if q == 0.0:
                out[i] = 1.0 - rho
            else:
                out[i] = _c_one(rho, q, lam0 + 0.5 * log1p(q), gl_x, gl_w, mult)
    return out_arr


def se_step(double[:, ::1] J, double[::1] alphas, double rho, double delta,
            double[::1] E, int w, double[::1] gl_x, double[::1] gl_w):
    """One state-evolution step over the banded coupling matrix.

    Returns (qhat, E_next).  Assumes positive denominators (the delta=0
    degenerate case is handled by the caller).
    """
    cdef Py_ssize_t L = E.shape[0]
    d_arr = np.empty(L, dtype=np.float64)
    qhat_arr = np.empty(L, dtype=np.float64)
    e_arr = np.empty(L, dtype=np.float64)
    cdef double[::1] d = d_arr
    cdef double[::1] qhat = qhat_arr
    cdef double[::1] e_next = e_arr
    cdef Py_ssize_t p, q, r, lo, hi
    cdef double acc, lam0, qh
    lam0 = log((1.0 - rho) / rho) if rho < 1.0 else 0.0
    with nogil:
        for q in range(L):
            lo = q - w if q - w > 0 else 0
            hi = q + w + 1 if q + w + 1 < L else L
            acc = 0.0
            for r in range(lo, hi):
                acc += J[q, r] * E[r]
            d[q] = delta + acc
        for p in range(L):
            lo = p - w if p - w > 0 else 0
            hi = p + w + 1 if p + w + 1 < L else L
            acc = 0.0
            for q in range(lo, hi):
                acc += alphas[q] * J[q, p] / d[q]
            qhat[p] = acc
        for p in range(L):
            qh = qhat[p]
            if rho == 1.0:
                e_next[p] = rho / (qh + 1.0)
            elif qh == 0.0:
                e_next[p] = rho
            else:
                acc = _c_one(rho, qh, lam0 + 0.5 * log1p(qh), gl_x, gl_w, 1)
                e_next[p] = rho * (acc * qh + 1.0) / (qh + 1.0)
    return qhat_arr, e_arr
