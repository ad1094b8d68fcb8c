"""State evolution for seeded spatially coupled compressed sensing.

Iterates the asymptotic per-block mean-squared-error recursion

    qhat_p = sum_q alpha_q J[q,p] / (delta + sum_r J[q,r] E_r)
    E_p'   = rho - rho^2 * qhat_p/(qhat_p+1) * G(rho, qhat_p)

from the uninformative start E_p = rho, detects success / stall, and
measures the position and speed of the reconstruction front.  G is the
Gaussian integral evaluated by the quadrature kernels; internally the
update uses the cancellation-free form E' = rho*(C*qhat+1)/(qhat+1) with
C = 1 - rho*G.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import kernels
from .model import CouplingSpec, ProblemParams, build_alpha_profile, build_coupling_matrix


def g_integral(rho: float, qhat: float) -> float:
    """G(rho, qhat), the Gaussian MMSE integral, to <= 1e-10 relative error.

    Evaluated by Gauss-Legendre panels, doubling the panel count until two
    successive refinements agree to 1e-12 relative.
    """
    _check_rho_qhat(rho, qhat)
    if qhat == 0.0:
        return 1.0
    if np.isinf(qhat):
        return 1.0 / rho
    g_prev = None
    for mult in (1, 2, 4, 8, 16):
        c = kernels.c_values(rho, np.array([qhat]), mult=mult)[0]
        g = (1.0 - c) / rho
        if g_prev is not None and abs(g - g_prev) <= 1e-12 * abs(g):
            return g
        g_prev = g
    warnings.warn(f"g_integral(rho={rho}, qhat={qhat}): refinement did not settle at 1e-12")
    return g_prev


def mmse_update(rho: float, qhat: float) -> float:
    """Next mean-squared error rho - rho^2 * qhat/(qhat+1) * G(rho, qhat).

    Lies in [0, rho]; computed as rho*(C*qhat+1)/(qhat+1) which stays
    accurate when qhat is large and E approaches zero.
    """
    _check_rho_qhat(rho, qhat)
    if np.isinf(qhat):
        return 0.0
    c = kernels.c_values(rho, np.array([qhat]))[0]
    return rho * (c * qhat + 1.0) / (qhat + 1.0)


def _check_rho_qhat(rho, qhat):
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho={rho} outside (0, 1]")
    if np.isnan(qhat) or qhat < 0.0:
        raise ValueError(f"qhat={qhat} must be non-negative")


class SEStatus(Enum):
    SUCCESS = "success"
    STALLED = "stalled"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class SEContext:
    """Inputs of one state-evolution system: coupling matrix, per-block
    undersampling ratios, and (rho, delta)."""

    coupling: np.ndarray
    alphas: np.ndarray
    params: ProblemParams
    spec: Optional[CouplingSpec] = None

    def __post_init__(self):
        J = np.ascontiguousarray(self.coupling, dtype=np.float64)
        a = np.ascontiguousarray(self.alphas, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise ValueError(f"coupling must be square, got {J.shape}")
        if a.shape != (J.shape[0],):
            raise ValueError(f"alphas length {a.shape} does not match L={J.shape[0]}")
        if np.any(J < 0.0) or np.any(a <= 0.0):
            raise ValueError("coupling entries must be >= 0 and alphas > 0")
        object.__setattr__(self, "coupling", J)
        object.__setattr__(self, "alphas", a)

    @classmethod
    def from_spec(cls, spec: CouplingSpec, params: ProblemParams) -> "SEContext":
        return cls(build_coupling_matrix(spec), build_alpha_profile(spec), params, spec)

    @property
    def L(self) -> int:
        return self.coupling.shape[0]

    @property
    def band_w(self) -> int:
        if self.spec is not None:
            return self.spec.w
        nz = np.nonzero(self.coupling)
        return int(np.max(np.abs(nz[0] - nz[1]))) if nz[0].size else 0

    @property
    def seed_size(self) -> int:
        if self.spec is not None:
            return self.spec.w_s
        bulk = self.alphas[-1]
        diff = np.nonzero(self.alphas != bulk)[0]
        return int(diff[-1]) + 1 if diff.size else 0


@dataclass(frozen=True)
class StopRule:
    """Stopping policy for se_run.

    success_threshold=None resolves adaptively: 10x the single-system
    fixed point reached from the informative start E=0 at the bulk alpha
    (falls back to 1e-8 if that fixed point underflows or is not an
    actual reconstruction).
    """

    tol_fixed_point: float = 1e-14
    max_iter: int = 100_000
    success_threshold: Optional[float] = None
    stall_window: int = 500
    eps_front: float = 1e-6
    record_profiles: int = 0


@dataclass
class SEOutcome:
    """Trajectory summary of one state-evolution run."""

    status: SEStatus
    final_profile: np.ndarray
    iterations: int
    front_trace: np.ndarray  # (n, 2) ints: iteration, front position
    mean_mse_trace: np.ndarray
    max_mse_trace: np.ndarray
    success_threshold: float
    profiles: Optional[list] = None  # [(iteration, profile copy)] when recorded


def _scalar_fixed_point(rho, alpha, delta, start, tol, max_iter):
    e = float(start)
    for _ in range(max_iter):
        den = delta + e
        if den == 0.0:
            return 0.0, True
        qh = alpha / den
        c = kernels.c_values(rho, np.array([qh]))[0]
        e_new = rho * (c * qh + 1.0) / (qh + 1.0)
        if abs(e_new - e) <= tol * max(e_new, 1e-300):
            return e_new, True
        e = e_new
    return e, False


def single_system_fixed_point(rho, alpha, delta, start, tol=1e-15, max_iter=2000):
    """Scalar fixed point of E -> mmse(rho, alpha/(delta+E)) from the given start."""
    return _scalar_fixed_point(rho, alpha, delta, start, tol, max_iter)[0]


def resolve_success_threshold(ctx: SEContext, stop: StopRule) -> float:
    """Delta-adaptive success level; see StopRule docstring."""
    if stop.success_threshold is not None:
        return stop.success_threshold
    rho = ctx.params.rho
    e_good, converged = _scalar_fixed_point(
        rho, ctx.alphas[-1], ctx.params.delta, start=0.0, tol=1e-6, max_iter=2000
    )
    if not converged or e_good <= 0.0 or 10.0 * e_good >= rho / 100.0:
        # underflowed, never settled (marginal alpha), or the good branch
        # does not exist at this alpha: fall back to a fixed level
        return 1e-8
    return 10.0 * e_good


def wavefront_position(profile: np.ndarray, eps_front: float) -> int:
    """Length of the contiguous reconstructed prefix: largest p with
    E_q < eps_front for all q <= p (0 if the first block is unsolved)."""
    above = np.nonzero(profile >= eps_front)[0]
    return int(above[0]) if above.size else len(profile)


def se_step(profile, ctx: SEContext):
    """One recursion step. Returns (next_profile, qhat_profile).

    A vanishing noise denominator (possible only at delta=0) is treated
    as exact knowledge: blocks measured by that row get E' = 0 and
    qhat = inf instead of a division error.
    """
    E = np.ascontiguousarray(profile, dtype=np.float64)
    if E.shape != (ctx.L,):
        raise ValueError(f"profile length {E.shape} does not match L={ctx.L}")
    if not np.all(np.isfinite(E)):
        raise ValueError("profile contains non-finite entries")
    J = ctx.coupling
    delta = ctx.params.delta
    rho = ctx.params.rho
    if delta == 0.0:
        d = J @ E
        if np.any(d == 0.0):
            zero_rows = d == 0.0
            weights = np.where(zero_rows, 0.0, ctx.alphas / np.where(zero_rows, 1.0, d))
            qhat = weights @ J
            c = kernels.c_values(rho, qhat)
            e_next = rho * (c * qhat + 1.0) / (qhat + 1.0)
            exact_cols = (J[zero_rows] > 0.0).any(axis=0)
            e_next[exact_cols] = 0.0
            qhat = qhat.astype(np.float64)
            qhat[exact_cols] = np.inf
            return e_next, qhat
    qhat, e_next = kernels.se_step_arrays(J, ctx.alphas, rho, delta, E, ctx.band_w)
    return e_next, qhat


def se_run(ctx: SEContext, init=None, stop: StopRule = StopRule()) -> SEOutcome:
    """Iterate se_step from `init` (None = uninformative start E_p = rho).

    Success as soon as max_p E_p <= success_threshold; Stalled when the
    front position is frozen and the profile moves less than
    tol_fixed_point for stall_window consecutive iterations;
    MaxIterations otherwise.
    """
    rho = ctx.params.rho
    E = np.full(ctx.L, rho) if init is None else np.array(init, dtype=np.float64)
    threshold = resolve_success_threshold(ctx, stop)

    fronts = [(0, wavefront_position(E, stop.eps_front))]
    means = [float(E.mean())]
    maxes = [float(E.max())]
    profiles = [(0, E.copy())] if stop.record_profiles else None

    status = SEStatus.MAX_ITERATIONS
    iterations = 0
    streak = 0
    for it in range(1, stop.max_iter + 1):
        E_new, _ = se_step(E, ctx)
        delta_max = float(np.max(np.abs(E_new - E)))
        E = E_new
        iterations = it

        front = wavefront_position(E, stop.eps_front)
        fronts.append((it, front))
        means.append(float(E.mean()))
        maxes.append(float(E.max()))
        if profiles is not None and it % stop.record_profiles == 0:
            profiles.append((it, E.copy()))

        if maxes[-1] <= threshold:
            status = SEStatus.SUCCESS
            break
        if front == fronts[-2][1] and delta_max < stop.tol_fixed_point:
            streak += 1
            if streak >= stop.stall_window:
                status = SEStatus.STALLED
                break
        else:
            streak = 0

    return SEOutcome(
        status=status,
        final_profile=E,
        iterations=iterations,
        front_trace=np.array(fronts, dtype=np.int64),
        mean_mse_trace=np.array(means),
        max_mse_trace=np.array(maxes),
        success_threshold=threshold,
        profiles=profiles,
    )


def propagation_speed(outcome: SEOutcome, ctx: SEContext) -> float:
    """Least-squares front speed (blocks per iteration) in the steady window.

    The window runs from the first iteration with front >= w_s + 5w to the
    first with front >= L - 5w.  Returns 0 for stalled runs; degenerate
    windows (shorter than 20 iterations, or never completed) also give 0,
    with a warning.
    """
    if outcome.status is SEStatus.STALLED:
        return 0.0
    w = ctx.band_w
    w_s = ctx.seed_size
    L = ctx.L
    its = outcome.front_trace[:, 0]
    fronts = outcome.front_trace[:, 1]
    start_idx = np.nonzero(fronts >= w_s + 5 * w)[0]
    if start_idx.size == 0:
        return 0.0
    end_idx = np.nonzero(fronts >= L - 5 * w)[0]
    if end_idx.size == 0:
        warnings.warn("front never reached the right margin; speed set to 0")
        return 0.0
    i0, i1 = int(start_idx[0]), int(end_idx[0])
    if its[i1] - its[i0] < 20:
        warnings.warn(
            f"steady window of {its[i1] - its[i0]} iterations is too short; speed set to 0"
        )
        return 0.0
    sel = slice(i0, i1 + 1)
    return float(np.polyfit(its[sel].astype(float), fronts[sel].astype(float), 1)[0])
