"""NumPy implementation of the state-evolution hot kernels.

Evaluates C(rho, qhat) = 1 - rho*G(rho, qhat), where G is the Gaussian
integral of the per-block MMSE recursion, by fixed Gauss-Legendre panels:

    C = sqrt(2/pi) * int_0^inf z^2 exp(-z^2/2) / (1 + exp(z^2*qhat/2 - lam)) dz
    lam = log((1-rho)/rho) + log1p(qhat)/2

For qhat <= 1 the integrand is smooth in z and uniform panels on
[0, Z_MAX] suffice.  For qhat > 1 the sigmoid develops an edge at
z ~ sqrt(2*lam/qhat); substituting u = z*sqrt(qhat) pins the edge at
u* = sqrt(2*lam) with width O(1/u*), so panels sized EDGE_RES/u* resolve
it at any qhat.  Working with C instead of G keeps the MMSE update
E' = rho*(C*qhat + 1)/(qhat + 1) free of cancellation at large qhat.

The Cython twin (_kernels_cy.pyx) implements the identical panel layout;
keep the two in sync.
"""

from __future__ import annotations

import numpy as np

Z_MAX = 12.0
N_Z_PANELS = 16
Q_SWITCH = 1.0
CUT = 45.0
EDGE_RES = 2.5
SQRT_2_OVER_PI = 0.7978845608028654  # sqrt(2/pi), kept literal to match the Cython twin


def _sigmoid_of_neg(arg):
    """1 / (1 + exp(arg)) without overflow for any arg."""
    out = np.empty_like(arg)
    pos = arg > 0
    e = np.exp(-arg[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(arg[~pos]))
    return out


def c_values(rho, qhat, gl_x01, gl_w01, mult=1):
    """C(rho, qhat_i) for an array of qhat values.

    gl_x01/gl_w01: Gauss-Legendre nodes and weights on [0, 1].
    mult multiplies every panel count (refinement studies).
    """
    qhat = np.asarray(qhat, dtype=np.float64)
    out = np.empty_like(qhat)
    if rho == 1.0:
        out.fill(0.0)
        return out
    lam = np.log((1.0 - rho) / rho) + 0.5 * np.log1p(qhat)

    zero = qhat == 0.0
    small = (qhat <= Q_SWITCH) & ~zero
    large = qhat > Q_SWITCH
    out[zero] = 1.0 - rho

    if np.any(small):
        n = N_Z_PANELS * mult
        edges = np.linspace(0.0, Z_MAX, n + 1)
        z = (edges[:-1, None] + np.diff(edges)[:, None] * gl_x01[None, :]).ravel()
        wgt = (np.diff(edges)[:, None] * gl_w01[None, :]).ravel()
        base = z * z * np.exp(-0.5 * z * z) * wgt
        arg = 0.5 * np.multiply.outer(qhat[small], z * z) - lam[small][:, None]
        out[small] = SQRT_2_OVER_PI * np.einsum(
            "ij,j->i", _sigmoid_of_neg(arg), base, optimize=False
        )

    if np.any(large):
        qh = qhat[large]
        lm = lam[large]
        lam_pos = np.maximum(lm, 0.0)
        ustar = np.sqrt(2.0 * lam_pos)
        ucap = np.minimum(np.sqrt(2.0 * lam_pos + 2.0 * CUT), np.sqrt(2.0 * CUT * qh))
        has_lo = lm > CUT
        # ulo clamps to ucap when the Gaussian cutoff sits below the sigmoid
        # edge (only reachable at absurdly small rho); the smooth region then
        # carries the whole integral
        ulo = np.where(has_lo, np.minimum(np.sqrt(2.0 * np.maximum(lm - CUT, 0.0)), ucap), 0.0)
        width = EDGE_RES / np.maximum(ustar, 1.4)
        n_e = np.maximum(np.ceil((ucap - ulo) / width), 1.0).astype(np.intp) * mult
        n_s = np.where(has_lo, 4 * mult, 0).astype(np.intp)
        counts = n_s + n_e

        # flat per-panel (element id, within-element index) via segmented arange
        total = int(counts.sum())
        elem = np.repeat(np.arange(qh.size), counts)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        j = np.arange(total) - np.repeat(starts, counts)

        w_s_panel = np.where(n_s > 0, ulo / np.maximum(n_s, 1), 0.0)
        w_e_panel = (ucap - ulo) / n_e
        in_seed = j < n_s[elem]
        p_width = np.where(in_seed, w_s_panel[elem], w_e_panel[elem])
        p_start = np.where(
            in_seed,
            j * w_s_panel[elem],
            ulo[elem] + (j - n_s[elem]) * w_e_panel[elem],
        )

        u = (p_start[:, None] + p_width[:, None] * gl_x01[None, :]).ravel()
        wgt = (p_width[:, None] * gl_w01[None, :]).ravel()
        elem_nodes = np.repeat(elem, gl_x01.size)
        qh_n = qh[elem_nodes]
        f = (
            u
            * u
            * np.exp(-0.5 * u * u / qh_n)
            * _sigmoid_of_neg(0.5 * u * u - lm[elem_nodes])
            * wgt
        )
        node_starts = np.concatenate([[0], np.cumsum(counts)[:-1]]) * gl_x01.size
        sums = np.add.reduceat(f, node_starts)
        out[large] = SQRT_2_OVER_PI * qh**-1.5 * sums

    return out


def se_step(J, alphas, rho, delta, E, w, gl_x01, gl_w01):
    """One state-evolution step. Returns (qhat, E_next).

    qhat_p = sum_q alpha_q J[q,p] / (delta + sum_r J[q,r] E_r)
    E_next = rho * (C*qhat + 1) / (qhat + 1)

    Assumes all denominators are positive (the delta=0 degenerate case is
    handled by the caller).
    """
    d = delta + J @ E
    qhat = (alphas / d) @ J
    c = c_values(rho, qhat, gl_x01, gl_w01)
    e_next = rho * (c * qhat + 1.0) / (qhat + 1.0)
    return qhat, e_next
