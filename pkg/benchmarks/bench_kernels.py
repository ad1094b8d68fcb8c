#!/usr/bin/env python3
"""Benchmark the compiled kernel against the NumPy fallback.

Times the two hot operations (batch C-integral evaluation and one full
state-evolution step) at several lattice sizes, and a short se_run to show
the end-to-end effect.  Run after building the extension:

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from scse import _kernels_numpy, kernels
from scse.model import CouplingSpec, ProblemParams
from scse.state_evolution import SEContext, StopRule, se_run


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_c_values(L, repeats):
    rng = np.random.default_rng(0)
    qhat = np.ascontiguousarray(10.0 ** rng.uniform(-2, 12, L))
    rows = {}
    if kernels.backend_name() == "cython":
        from scse import _kernels_cy

        rows["cython"] = _time(
            lambda: _kernels_cy.c_values(0.4, qhat, kernels.GL_X01, kernels.GL_W01, 1),
            repeats,
        )
    rows["numpy"] = _time(
        lambda: _kernels_numpy.c_values(0.4, qhat, kernels.GL_X01, kernels.GL_W01),
        repeats,
    )
    return rows


def bench_se_step(L, w, repeats):
    spec = CouplingSpec(L=L, w=w, w_s=min(4 * w + 8, L - 1), alpha_b=0.5, alpha_s=1.0)
    ctx = SEContext.from_spec(spec, ProblemParams(0.4, 1e-12))
    rng = np.random.default_rng(1)
    E = np.ascontiguousarray(rng.uniform(1e-12, 0.4, L))
    rows = {}
    if kernels.backend_name() == "cython":
        from scse import _kernels_cy

        rows["cython"] = _time(
            lambda: _kernels_cy.se_step(
                ctx.coupling, ctx.alphas, 0.4, 1e-12, E, w, kernels.GL_X01, kernels.GL_W01
            ),
            repeats,
        )
    rows["numpy"] = _time(
        lambda: _kernels_numpy.se_step(
            ctx.coupling, ctx.alphas, 0.4, 1e-12, E, w, kernels.GL_X01, kernels.GL_W01
        ),
        repeats,
    )
    return rows


def bench_se_run(n_iter=300):
    """End-to-end: n_iter iterations of a propagating wave at L=240."""
    spec = CouplingSpec(L=240, w=1, w_s=12, alpha_b=0.47, alpha_s=1.0)
    ctx = SEContext.from_spec(spec, ProblemParams(0.4, 1e-12))
    stop = StopRule(max_iter=n_iter, success_threshold=0.0, stall_window=10**9)
    t0 = time.perf_counter()
    se_run(ctx, stop=stop)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"selected backend: {kernels.backend_name()}")
    print()
    print(f"{'operation':<28}{'cython':>12}{'numpy':>12}{'speedup':>10}")
    for L in (60, 240, 640):
        rows = bench_c_values(L, args.repeats)
        cy, np_ = rows.get("cython"), rows["numpy"]
        sp = f"{np_ / cy:8.1f}x" if cy else "     n/a"
        cy_s = f"{cy * 1e3:10.3f}ms" if cy else "       n/a"
        print(f"{'c_values   L=' + str(L):<28}{cy_s:>12}{np_ * 1e3:10.3f}ms{sp:>10}")
    for L, w in ((240, 1), (400, 1), (640, 16)):
        rows = bench_se_step(L, w, args.repeats)
        cy, np_ = rows.get("cython"), rows["numpy"]
        sp = f"{np_ / cy:8.1f}x" if cy else "     n/a"
        cy_s = f"{cy * 1e3:10.3f}ms" if cy else "       n/a"
        print(f"{f'se_step    L={L} w={w}':<28}{cy_s:>12}{np_ * 1e3:10.3f}ms{sp:>10}")
    dt = bench_se_run()
    print(f"\nse_run 300 iterations at L=240 ({kernels.backend_name()}): {dt:.2f}s "
          f"({dt / 300 * 1e3:.2f} ms/iteration)")


if __name__ == "__main__":
    main()
