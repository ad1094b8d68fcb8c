"""Kernel backend selection: compiled Cython core with a NumPy fallback.

The state-evolution inner loop (banded coupling sums plus one Gaussian
quadrature per block per iteration) dominates the runtime of threshold
and phase-diagram scans.  A Cython extension implements it; if the
extension is not built, a vectorized NumPy twin is used instead.  Both
produce the same panel layout and agree to ~1e-15 relative.

Set SCSE_KERNELS=numpy or SCSE_KERNELS=cython to force a backend
(forcing cython raises if the extension is missing).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_numpy

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
GL_X01 = np.ascontiguousarray(0.5 * (_GL_X + 1.0))
GL_W01 = np.ascontiguousarray(0.5 * _GL_W)

_cy = None
_requested = os.environ.get("SCSE_KERNELS", "").strip().lower()
if _requested not in ("", "numpy", "cython"):
    raise RuntimeError(f"SCSE_KERNELS={_requested!r}: expected 'numpy' or 'cython'")
if _requested != "numpy":
    try:
        from . import _kernels_cy as _cy
    except ImportError:
        _cy = None
        if _requested == "cython":
            raise RuntimeError("SCSE_KERNELS=cython but the extension is not built")


def backend_name() -> str:
    return "cython" if _cy is not None else "numpy"


def c_values(rho: float, qhat, mult: int = 1) -> np.ndarray:
    """Vector of C(rho, qhat_i) = 1 - rho*G(rho, qhat_i)."""
    qhat = np.ascontiguousarray(qhat, dtype=np.float64)
    if _cy is not None:
        return _cy.c_values(rho, qhat, GL_X01, GL_W01, mult)
    return _kernels_numpy.c_values(rho, qhat, GL_X01, GL_W01, mult)


def se_step_arrays(J, alphas, rho, delta, E, w):
    """One SE step on raw arrays; returns (qhat, E_next).

    Callers must guarantee positive noise denominators (delta > 0, or
    profiles bounded away from an exact zero); the delta=0 special case
    lives in state_evolution.se_step.
    """
    if _cy is not None:
        return _cy.se_step(J, alphas, rho, delta, E, w, GL_X01, GL_W01)
    return _kernels_numpy.se_step(J, alphas, rho, delta, E, w, GL_X01, GL_W01)
