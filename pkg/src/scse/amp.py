"""Finite-N validation: seeded coupled instances and AMP reconstruction.

Generates concrete realizations of the coupled ensemble (y = F x + noise
with block-variance structure J[q,r]/N) and runs an approximate
message-passing solver with per-component variances.  The testable
contract is relative: the per-block MSE trajectory of AMP must track the
asymptotic state-evolution recursion for the same geometry.

F is stored block-banded (only the |q - r| <= w column blocks of each row
block), since the dense matrix at validation scale would not fit in
memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import CouplingSpec, ProblemParams, build_alpha_profile, build_coupling_matrix


class AmpDivergenceError(RuntimeError):
    def __init__(self, iteration):
        super().__init__(f"AMP state became non-finite at iteration {iteration}")
        self.iteration = iteration


@dataclass
class BlockBandedMatrix:
    """Row-block banded dense matrix.

    blocks[q] holds the dense (m_q, n_cols_q) slice of row block q covering
    signal columns [col_lo[q], col_hi[q]); everything outside is zero.
    """

    blocks: list
    row_sizes: np.ndarray
    col_lo: np.ndarray
    col_hi: np.ndarray
    n_cols: int

    @property
    def n_rows(self) -> int:
        return int(self.row_sizes.sum())

    def matvec(self, x):
        out = np.empty(self.n_rows)
        r0 = 0
        for q, blk in enumerate(self.blocks):
            r1 = r0 + blk.shape[0]
            out[r0:r1] = blk @ x[self.col_lo[q] : self.col_hi[q]]
            r0 = r1
        return out

    def rmatvec(self, y):
        out = np.zeros(self.n_cols)
        r0 = 0
        for q, blk in enumerate(self.blocks):
            r1 = r0 + blk.shape[0]
            out[self.col_lo[q] : self.col_hi[q]] += blk.T @ y[r0:r1]
            r0 = r1
        return out

    def squared(self) -> "BlockBandedMatrix":
        return BlockBandedMatrix(
            blocks=[blk * blk for blk in self.blocks],
            row_sizes=self.row_sizes,
            col_lo=self.col_lo,
            col_hi=self.col_hi,
            n_cols=self.n_cols,
        )

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        r0 = 0
        for q, blk in enumerate(self.blocks):
            out[r0 : r0 + blk.shape[0], self.col_lo[q] : self.col_hi[q]] = blk
            r0 += blk.shape[0]
        return out


@dataclass
class Instance:
    """One finite-N realization of the seeded coupled ensemble."""

    spec: CouplingSpec
    params: ProblemParams
    N: int
    rng_seed: int
    block_cols: np.ndarray
    block_rows: np.ndarray
    F: BlockBandedMatrix
    x_true: np.ndarray
    y: np.ndarray

    @property
    def M(self) -> int:
        return int(self.block_rows.sum())

    def column_block_slices(self):
        edges = np.concatenate([[0], np.cumsum(self.block_cols)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    def realized_alphas(self) -> np.ndarray:
        """Row/column ratios actually realized after integer rounding."""
        return self.block_rows / self.block_cols


def block_row_sizes(spec: CouplingSpec, N: int) -> np.ndarray:
    """Round alpha_q*N/L per block; the total is pinned to round(alpha_eff*N)
    with the residual absorbed by the last bulk block."""
    alphas = build_alpha_profile(spec)
    n_per = N // spec.L
    sizes = np.rint(alphas * n_per).astype(np.int64)
    target = int(np.rint(alphas.sum() * n_per))
    sizes[-1] += target - sizes.sum()
    return sizes


def generate_instance(
    spec: CouplingSpec, params: ProblemParams, N: int, rng_seed: int
) -> Instance:
    """Draw one instance: signal, block-banded matrix, measurements.

    Fully reproducible from rng_seed.  Requires L | N; every row block
    must end up with at least one row.
    """
    if N % spec.L != 0:
        raise ValueError(f"L={spec.L} does not divide N={N}")
    n_per = N // spec.L
    rows = block_row_sizes(spec, N)
    if np.any(rows < 1):
        bad = int(np.argmin(rows))
        raise ValueError(f"row block {bad} has {rows[bad]} rows; alpha_q*N/L too small")

    rng = np.random.default_rng(rng_seed)
    J = build_coupling_matrix(spec)
    scale = np.sqrt(J / N)

    nz = rng.random(N) < params.rho
    x_true = np.where(nz, rng.standard_normal(N), 0.0)

    blocks = []
    col_lo = np.empty(spec.L, dtype=np.int64)
    col_hi = np.empty(spec.L, dtype=np.int64)
    for q in range(spec.L):
        r_lo = max(0, q - spec.w)
        r_hi = min(spec.L, q + spec.w + 1)
        col_lo[q] = r_lo * n_per
        col_hi[q] = r_hi * n_per
        blk = rng.standard_normal((int(rows[q]), int(col_hi[q] - col_lo[q])))
        for r in range(r_lo, r_hi):
            blk[:, (r - r_lo) * n_per : (r - r_lo + 1) * n_per] *= scale[q, r]
        blocks.append(blk)

    F = BlockBandedMatrix(
        blocks=blocks,
        row_sizes=rows,
        col_lo=col_lo,
        col_hi=col_hi,
        n_cols=N,
    )
    noise = np.sqrt(params.delta) * rng.standard_normal(F.n_rows)
    y = F.matvec(x_true) + noise
    return Instance(
        spec=spec,
        params=params,
        N=N,
        rng_seed=rng_seed,
        block_cols=np.full(spec.L, n_per, dtype=np.int64),
        block_rows=rows,
        F=F,
        x_true=x_true,
        y=y,
    )


def denoise(R, Sigma2, rho):
    """Posterior mean and variance of x under the Bernoulli-Gaussian prior
    rho*N(0,1) + (1-rho)*delta_0 given R = x + N(0, Sigma2).

    With m = R/(1+Sigma2), s2 = Sigma2/(1+Sigma2) and slab weight pi:
    mean = pi*m, variance = pi*s2 + pi*(1-pi)*m^2.  The slab weight is
    formed in log space so extreme snr does not underflow.
    """
    R = np.asarray(R, dtype=np.float64)
    Sigma2 = np.asarray(Sigma2, dtype=np.float64)
    if np.any(Sigma2 <= 0.0):
        raise ValueError("Sigma2 must be positive")
    m = R / (1.0 + Sigma2)
    s2 = Sigma2 / (1.0 + Sigma2)
    if rho == 1.0:
        return m, np.broadcast_to(s2, m.shape).copy()
    # log odds of the zero spike vs the slab
    arg = (
        np.log((1.0 - rho) / rho)
        + 0.5 * np.log1p(1.0 / Sigma2)
        - 0.5 * R * R / (Sigma2 * (1.0 + Sigma2))
    )
    pi = np.empty_like(arg)
    pos = arg > 0
    e = np.exp(-arg[pos])
    pi[pos] = e / (1.0 + e)
    pi[~pos] = 1.0 / (1.0 + np.exp(arg[~pos]))
    mean = pi * m
    var = pi * s2 + pi * (1.0 - pi) * m * m
    return mean, var


@dataclass
class AmpTrajectory:
    """Per-iteration record of one AMP run."""

    block_mse: np.ndarray  # (iterations+1, L), row 0 is the a=0 start
    iterations: int
    converged: bool
    final_a: np.ndarray
    final_v: np.ndarray


def amp_run(
    instance: Instance,
    params: Optional[ProblemParams] = None,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> AmpTrajectory:
    """AMP with per-component variances; records per-block MSE each iteration.

    Start: a=0, v=rho, omega=y, V = F^2 v. Each iteration:
        V      <- F^2 v
        omega  <- F a - (y - omega_prev) * V / (delta + V_prev)
        Sigma2 <- 1 / (F^2)^T [1/(delta + V)]
        R      <- a + Sigma2 * F^T [(y - omega)/(delta + V)]
        (a, v) <- denoise(R, Sigma2, rho)
    Stops at max_iter or when the a-update RMS falls below tol.
    """
    if params is None:
        params = instance.params
    rho, delta = params.rho, params.delta
    F = instance.F
    F2 = F.squared()
    y = instance.y
    N = instance.N

    a = np.zeros(N)
    v = np.full(N, rho)
    omega = y.copy()
    V = F2.matvec(v)

    slices = instance.column_block_slices()
    sizes = instance.block_cols.astype(np.float64)

    def record(dst):
        for p, sl in enumerate(slices):
            d = a[sl] - instance.x_true[sl]
            dst[p] = np.dot(d, d) / sizes[p]

    L = instance.spec.L
    mse = np.empty((max_iter + 1, L))
    record(mse[0])

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        V_prev, omega_prev = V, omega
        V = F2.matvec(v)
        omega = F.matvec(a) - (y - omega_prev) * V / (delta + V_prev)
        inv_dV = 1.0 / (delta + V)
        Sigma2 = 1.0 / F2.rmatvec(inv_dV)
        R = a + Sigma2 * F.rmatvec((y - omega) * inv_dV)
        a_new, v = denoise(R, Sigma2, rho)
        if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(v))):
            raise AmpDivergenceError(it)
        step = float(np.sqrt(np.mean((a_new - a) ** 2)))
        a = a_new
        record(mse[it])
        if step < tol:
            converged = True
            break

    return AmpTrajectory(
        block_mse=mse[: it + 1],
        iterations=it,
        converged=converged,
        final_a=a,
        final_v=v,
    )


@dataclass(frozen=True)
class DeviationMetrics:
    """SE-vs-AMP agreement over a common iteration grid."""

    max_mean_abs_block_dev: float
    mean_abs_block_dev: np.ndarray  # per iteration
    front_position_dev: np.ndarray  # per iteration, |front_se - front_amp|
    iterations: int


def se_amp_deviation(se_profiles, amp_block_mse, eps_front: float = 1e-6) -> DeviationMetrics:
    """Compare an SE trajectory (list of per-block profiles, one per
    iteration) against an AMP per-block MSE trajectory.

    Grids are truncated to the shorter run.  Front positions use the
    contiguous-prefix rule at eps_front.
    """
    from .state_evolution import wavefront_position

    se = np.asarray(se_profiles, dtype=np.float64)
    amp = np.asarray(amp_block_mse, dtype=np.float64)
    n = min(se.shape[0], amp.shape[0])
    se, amp = se[:n], amp[:n]
    dev = np.mean(np.abs(se - amp), axis=1)
    fronts = np.array(
        [
            abs(wavefront_position(se[t], eps_front) - wavefront_position(amp[t], eps_front))
            for t in range(n)
        ],
        dtype=np.int64,
    )
    return DeviationMetrics(
        max_mean_abs_block_dev=float(dev.max()) if n else 0.0,
        mean_abs_block_dev=dev,
        front_position_dev=fronts,
        iterations=n,
    )


def validate_against_se(
    spec: CouplingSpec,
    params: ProblemParams,
    N: int,
    n_seeds: int = 5,
    n_iters: int = 50,
    rng_seed0: int = 1000,
):
    """Average AMP per-block MSE over n_seeds instances and compare with
    the matched-geometry SE trajectory (realized per-block ratios after
    integer rounding of the row-block sizes).

    Returns (metrics, se_profiles, amp_mean_mse); rows are iterations
    0..n_iters, columns are blocks.
    """
    from .state_evolution import SEContext, StopRule, se_run

    total = None
    realized = None
    for s in range(n_seeds):
        inst = generate_instance(spec, params, N, rng_seed0 + s)
        if realized is None:
            realized = inst.realized_alphas()
        traj = amp_run(inst, max_iter=n_iters, tol=0.0)
        total = traj.block_mse if total is None else total + traj.block_mse
        del inst, traj  # each instance holds ~O(GB) at validation scale
    amp_mean = total / n_seeds

    ctx = SEContext(build_coupling_matrix(spec), realized, params, spec)
    stop = StopRule(
        max_iter=n_iters, success_threshold=0.0, stall_window=10**9, record_profiles=1
    )
    se_out = se_run(ctx, stop=stop)
    se_profiles = np.array([p for _, p in se_out.profiles])
    return se_amp_deviation(se_profiles, amp_mean), se_profiles, amp_mean


def save_instance(instance: Instance, path_prefix: str):
    """Persist an instance: JSON header plus flat little-endian float64
    arrays for F (dense row-major), x_true and y."""
    header = {
        "spec": instance.spec.to_json_dict(),
        "params": {"rho": instance.params.rho, "delta": instance.params.delta},
        "N": instance.N,
        "M": instance.M,
        "rng_seed": instance.rng_seed,
    }
    with open(path_prefix + ".json", "w") as f:
        json.dump(header, f, indent=1)
    instance.F.to_dense().astype("<f8").tofile(path_prefix + "_F.bin")
    instance.x_true.astype("<f8").tofile(path_prefix + "_x.bin")
    instance.y.astype("<f8").tofile(path_prefix + "_y.bin")


def load_instance(path_prefix: str) -> Instance:
    with open(path_prefix + ".json") as f:
        header = json.load(f)
    spec = CouplingSpec.from_json_dict(header["spec"])
    params = ProblemParams(**header["params"])
    N = int(header["N"])
    n_per = N // spec.L
    rows = block_row_sizes(spec, N)
    dense = np.fromfile(path_prefix + "_F.bin", dtype="<f8").reshape(int(header["M"]), N)
    blocks = []
    col_lo = np.empty(spec.L, dtype=np.int64)
    col_hi = np.empty(spec.L, dtype=np.int64)
    r0 = 0
    for q in range(spec.L):
        col_lo[q] = max(0, q - spec.w) * n_per
        col_hi[q] = min(spec.L, q + spec.w + 1) * n_per
        blocks.append(np.ascontiguousarray(dense[r0 : r0 + rows[q], col_lo[q] : col_hi[q]]))
        r0 += int(rows[q])
    return Instance(
        spec=spec,
        params=params,
        N=N,
        rng_seed=int(header["rng_seed"]),
        block_cols=np.full(spec.L, n_per, dtype=np.int64),
        block_rows=rows,
        F=BlockBandedMatrix(blocks, rows, col_lo, col_hi, N),
        x_true=np.fromfile(path_prefix + "_x.bin", dtype="<f8"),
        y=np.fromfile(path_prefix + "_y.bin", dtype="<f8"),
    )
