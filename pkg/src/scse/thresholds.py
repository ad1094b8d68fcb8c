"""Threshold and phase-boundary location by bisection on state evolution.

Locates the single-system algorithmic threshold alpha_BP, the coupled
finite-range threshold alpha_w, a large-range proxy for the optimal
threshold alpha_c, seeding phase boundaries in the (w_s, alpha_s) plane,
and the seed minimizing the effective undersampling ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

from ._parallel import pmap
from .model import CouplingSpec, ProblemParams, ShapeFunction, effective_alpha, flat_shape
from .state_evolution import SEContext, SEStatus, StopRule, se_run

DEFAULT_TOL = 5e-4
ALPHA_S_CAP = 1.5  # beyond alpha=1 a block is oversampled; strength past this is wasted


class ThresholdKind(Enum):
    BP = "bp"
    COUPLED_W = "w"
    C_PROXY = "cproxy"


class BracketError(RuntimeError):
    """The bisection bracket endpoints do not straddle the transition."""


@dataclass(frozen=True)
class ThresholdResult:
    value: float  # certified-success end of the bracket
    bracket: tuple
    kind: ThresholdKind
    meta: dict


@dataclass(frozen=True)
class SeedBoundary:
    """Minimal seed strength alpha_s*(w_s) for wave propagation.

    points: (w_s, alpha_s_star, alpha_eff) for seeds that propagate at
    alpha_s <= ALPHA_S_CAP; non_propagating: w_s values that do not.
    """

    points: tuple
    non_propagating: tuple
    config: dict


def _bisect(predicate, lo, hi, tol, label="", check_lo=True, check_hi=True):
    """Bisection for a False->True transition; returns (lo_fail, hi_success).

    check_lo/check_hi skip endpoint verification when the caller already
    knows the endpoint outcomes (saves one SE run each).
    """
    if check_lo and predicate(lo):
        raise BracketError(f"{label}: predicate already true at bracket low {lo}")
    if check_hi and not predicate(hi):
        raise BracketError(f"{label}: predicate still false at bracket high {hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return lo, hi


def _coupled_run_succeeds(spec: CouplingSpec, params: ProblemParams, stop: StopRule) -> bool:
    ctx = SEContext.from_spec(spec, params)
    return se_run(ctx, stop=stop).status is SEStatus.SUCCESS


def _single_system_spec(alpha: float) -> CouplingSpec:
    return CouplingSpec(L=1, w=0, w_s=0, alpha_b=alpha, alpha_s=alpha)


def find_alpha_bp(rho, delta, tol=DEFAULT_TOL, stop: StopRule = StopRule()) -> ThresholdResult:
    """Single-system algorithmic threshold, bisected on alpha in [rho, 1]."""
    params = ProblemParams(rho, delta)

    def ok(alpha):
        return _coupled_run_succeeds(_single_system_spec(alpha), params, stop)

    lo, hi = _bisect(ok, rho, 1.0, tol, label=f"alpha_bp(rho={rho}, delta={delta})")
    return ThresholdResult(
        value=hi,
        bracket=(lo, hi),
        kind=ThresholdKind.BP,
        meta={"rho": rho, "delta": delta, "w": 0, "L": 1, "tol": tol},
    )


@lru_cache(maxsize=256)
def _alpha_bp_cached(rho, delta, tol):
    return find_alpha_bp(rho, delta, tol)


def threshold_seed(w: int) -> tuple:
    """Seed used for threshold hunting: comfortably above every observed
    propagation boundary while leaving the bulk dominant."""
    return 4 * w + 8, 1.0


def find_alpha_w(
    rho,
    delta,
    w,
    shape: ShapeFunction = None,
    L: int = 240,
    tol: float = DEFAULT_TOL,
    stop: StopRule = StopRule(),
    kind: ThresholdKind = ThresholdKind.COUPLED_W,
) -> ThresholdResult:
    """Coupled-system reconstruction threshold at finite interaction range w.

    Bisects the bulk ratio alpha_b between rho and the single-system
    alpha_BP, with a large strong seed (w_s = 4w+8, alpha_s = 1) so the
    result depends only on (alpha_b, rho, delta, w, shape).
    """
    if shape is None:
        shape = flat_shape()
    if w < 1:
        raise ValueError("find_alpha_w needs w >= 1; use find_alpha_bp for the single system")
    params = ProblemParams(rho, delta)
    w_s, alpha_s = threshold_seed(w)
    if w_s >= L:
        raise ValueError(f"L={L} too small for the threshold seed w_s={w_s}")
    alpha_bp = _alpha_bp_cached(rho, delta, tol).value

    def ok(alpha_b):
        spec = CouplingSpec(L=L, w=w, w_s=w_s, alpha_b=alpha_b, alpha_s=alpha_s, shape=shape)
        return _coupled_run_succeeds(spec, params, stop)

    lo, hi = _bisect(ok, rho, alpha_bp, tol, label=f"alpha_w(rho={rho}, w={w})")
    return ThresholdResult(
        value=hi,
        bracket=(lo, hi),
        kind=kind,
        meta={
            "rho": rho,
            "delta": delta,
            "w": w,
            "shape": shape.kind.value,
            "A": shape.A,
            "L": L,
            "w_s": w_s,
            "alpha_s": alpha_s,
            "tol": tol,
        },
    )


def alpha_c_estimate(rho, delta, tol=DEFAULT_TOL, stop: StopRule = StopRule()) -> ThresholdResult:
    """Large-range proxy for the single-system reconstructability limit.

    Returns the coupled threshold at w = 16, L = 40*w.  The coupled
    threshold decreases toward the optimal one as w grows, so this is an
    upper bound that tightens with w; it is not a replica computation.
    """
    return find_alpha_w(rho, delta, w=16, L=640, tol=tol, stop=stop, kind=ThresholdKind.C_PROXY)


def _seed_point_task(args):
    (w_s, rho, delta, alpha_b, w, L, shape_kind, shape_A, tol, stop) = args
    shape = ShapeFunction(shape_kind, shape_A)
    params = ProblemParams(rho, delta)

    def ok(alpha_s):
        spec = CouplingSpec(L=L, w=w, w_s=w_s, alpha_b=alpha_b, alpha_s=alpha_s, shape=shape)
        return _coupled_run_succeeds(spec, params, stop)

    if not ok(ALPHA_S_CAP):
        return (w_s, None, None)
    # alpha_s = alpha_b is the uniform profile, already verified failing by
    # the caller; the cap was just verified succeeding.
    _, hi = _bisect(
        ok, alpha_b, ALPHA_S_CAP, tol,
        label=f"seed(w_s={w_s})", check_lo=False, check_hi=False,
    )
    spec = CouplingSpec(L=L, w=w, w_s=w_s, alpha_b=alpha_b, alpha_s=hi, shape=shape)
    return (w_s, hi, effective_alpha(spec))


def seed_boundary(
    rho,
    delta,
    alpha_b,
    w,
    L,
    shape: ShapeFunction = None,
    ws_list=range(1, 41),
    tol: float = DEFAULT_TOL,
    stop: StopRule = StopRule(),
    jobs: int = 1,
) -> SeedBoundary:
    """Propagation boundary alpha_s*(w_s) at fixed bulk ratio alpha_b.

    For each seed size, bisects the seed strength in (alpha_b, 1.5] with
    whole-profile state-evolution success as the predicate.  Seeds that
    fail even at the cap are recorded as non-propagating.  An empty
    boundary is a legal result.
    """
    if shape is None:
        shape = flat_shape()
    params = ProblemParams(rho, delta)
    ws_list = [int(x) for x in ws_list]

    # alpha_s = alpha_b gives the uniform seedless profile for every w_s;
    # verify once that it fails, so each per-w_s bracket is valid.
    uniform = CouplingSpec(L=L, w=w, w_s=0, alpha_b=alpha_b, alpha_s=alpha_b, shape=shape)
    if _coupled_run_succeeds(uniform, params, stop):
        raise BracketError(
            f"uniform system at alpha_b={alpha_b} already reconstructs; "
            "no seeding is needed and the boundary is degenerate"
        )

    tasks = [
        (w_s, rho, delta, alpha_b, w, L, shape.kind.value, shape.A, tol, stop)
        for w_s in ws_list
    ]
    results = pmap(_seed_point_task, tasks, jobs=jobs)
    points = tuple((w_s, a, eff) for (w_s, a, eff) in results if a is not None)
    non_prop = tuple(w_s for (w_s, a, _) in results if a is None)
    return SeedBoundary(
        points=points,
        non_propagating=non_prop,
        config={
            "rho": rho,
            "delta": delta,
            "alpha_b": alpha_b,
            "w": w,
            "L": L,
            "shape": shape.kind.value,
            "A": shape.A,
            "tol": tol,
            "alpha_s_cap": ALPHA_S_CAP,
        },
    )


def minimize_effective_alpha(boundary: SeedBoundary) -> Optional[tuple]:
    """Boundary point of minimal alpha_eff as (w_s, alpha_s, alpha_eff);
    ties break toward smaller w_s.  None when no seed propagates."""
    if not boundary.points:
        return None
    return min(boundary.points, key=lambda p: (p[2], p[0]))


def _phase_row_task(args):
    (rho, delta, w_list, shape_kind, shape_A, L, tol) = args
    shape = ShapeFunction(shape_kind, shape_A)
    rows = []
    try:
        bp = find_alpha_bp(rho, delta, tol).value
    except BracketError as e:
        bp, bp_err = None, str(e)
    else:
        bp_err = None
    try:
        proxy = alpha_c_estimate(rho, delta, tol).value
    except BracketError as e:
        proxy, proxy_err = None, str(e)
    else:
        proxy_err = None
    for w in w_list:
        row = {"rho": rho, "w": w, "alpha_bp": bp, "alpha_w": None, "alpha_c_proxy": proxy}
        errs = [x for x in (bp_err, proxy_err) if x]
        try:
            row["alpha_w"] = find_alpha_w(rho, delta, w, shape=shape, L=L, tol=tol).value
        except BracketError as e:
            errs.append(str(e))
        row["error"] = "; ".join(errs)
        rows.append(row)
    return rows


def phase_diagram(
    rho_grid,
    delta,
    w_list,
    shape: ShapeFunction = None,
    L: int = 240,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
) -> list:
    """Rows (rho, w, alpha_bp, alpha_w, alpha_c_proxy) over the given grids.

    Per-row bracket failures are recorded in an 'error' column, not fatal.
    """
    if shape is None:
        shape = flat_shape()
    tasks = [
        (float(rho), delta, list(w_list), shape.kind.value, shape.A, L, tol)
        for rho in rho_grid
    ]
    out = []
    for rows in pmap(_phase_row_task, tasks, jobs=jobs):
        out.extend(rows)
    return out
