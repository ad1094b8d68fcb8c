"""State-evolution recursion: integral values, step, run loop, front logic."""

import numpy as np
import pytest

from scse.model import CouplingSpec, ProblemParams
from scse.state_evolution import (
    SEContext,
    SEStatus,
    StopRule,
    g_integral,
    mmse_update,
    propagation_speed,
    resolve_success_threshold,
    se_run,
    se_step,
    single_system_fixed_point,
    wavefront_position,
)

# frozen from the independent 1e6-point trapezoid oracle on [0, 40]
G_ORACLE_RHO02_QHAT1 = 2.16343117859417
MMSE_ORACLE_RHO02_QHAT1 = 0.15673137642812


class TestGIntegral:
    def test_qhat_zero_is_one(self):
        assert g_integral(0.4, 0.0) == pytest.approx(1.0, abs=1e-10)

    def test_large_qhat_limit(self):
        g = g_integral(0.4, 1e12)
        assert 2.4999 < g <= 2.5

    def test_frozen_oracle_point(self):
        assert g_integral(0.2, 1.0) == pytest.approx(G_ORACLE_RHO02_QHAT1, rel=1e-10)

    def test_bounds_on_grid(self):
        for rho in (0.05, 0.2, 0.4, 0.7, 0.95):
            for qh in np.logspace(-6, 13, 40):
                g = g_integral(rho, float(qh))
                assert 1.0 - 1e-12 <= g <= 1.0 / rho + 1e-12

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            g_integral(0.4, -1.0)
        with pytest.raises(ValueError):
            g_integral(0.0, 1.0)
        with pytest.raises(ValueError):
            g_integral(1.2, 1.0)


class TestMmseUpdate:
    def test_no_information(self):
        assert mmse_update(0.4, 0.0) == pytest.approx(0.4, abs=1e-14)

    def test_near_perfect_knowledge(self):
        assert mmse_update(0.4, 1e12) <= 1e-6

    def test_frozen_oracle_point(self):
        assert mmse_update(0.2, 1.0) == pytest.approx(MMSE_ORACLE_RHO02_QHAT1, rel=1e-10)

    def test_range(self):
        for rho in (0.1, 0.4, 0.8, 1.0):
            for qh in np.logspace(-8, 14, 45):
                e = mmse_update(rho, float(qh))
                assert 0.0 <= e <= rho + 1e-15

    def test_infinite_qhat(self):
        assert mmse_update(0.3, np.inf) == 0.0


def _ctx(L=1, w=0, w_s=0, alpha_b=0.5, alpha_s=None, rho=0.2, delta=1e-12, **kw):
    spec = CouplingSpec(
        L=L, w=w, w_s=w_s, alpha_b=alpha_b,
        alpha_s=alpha_s if alpha_s is not None else alpha_b, **kw,
    )
    return SEContext.from_spec(spec, ProblemParams(rho, delta))


class TestSeStep:
    def test_single_system_scalar(self):
        ctx = _ctx(alpha_b=0.5, rho=0.2, delta=1e-12)
        E, qhat = se_step(np.array([0.2]), ctx)
        assert qhat[0] == pytest.approx(0.5 / (1e-12 + 0.2), rel=1e-12)
        assert E[0] == mmse_update(0.2, qhat[0])

    def test_interior_translation_invariance(self):
        # blocks at least 2w from either edge see only full-band rows
        ctx = _ctx(L=30, w=1, alpha_b=0.5, rho=0.3, delta=1e-10)
        E, qhat = se_step(np.full(30, 0.25), ctx)
        interior_q = qhat[2:-2]
        assert np.ptp(interior_q) <= 1e-13 * interior_q[0]
        assert np.ptp(E[2:-2]) <= 1e-13 * abs(E[2])

    def test_rejects_bad_profiles(self):
        ctx = _ctx(L=4, w=1)
        with pytest.raises(ValueError):
            se_step(np.zeros(3), ctx)
        with pytest.raises(ValueError):
            se_step(np.array([0.1, np.nan, 0.1, 0.1]), ctx)

    def test_delta_zero_exact_knowledge(self):
        ctx = _ctx(L=5, w=1, alpha_b=0.5, rho=0.3, delta=0.0)
        E0 = np.array([0.0, 0.0, 0.3, 0.3, 0.3])
        E, qhat = se_step(E0, ctx)
        # only row 0's band (blocks 0, 1) sums to zero; it measures blocks 0 and 1
        assert np.isinf(qhat[0]) and np.isinf(qhat[1])
        assert E[0] == 0.0 and E[1] == 0.0
        assert np.isfinite(qhat[2:]).all()
        assert np.isfinite(E[2:]).all() and np.all(E[2:] > 0.0)


class TestSeRun:
    def test_single_system_embedding(self):
        # L=1/w=0 run must equal the scalar recursion through mmse_update
        ctx = _ctx(alpha_b=0.7, rho=0.3, delta=1e-9)
        out = se_run(ctx, stop=StopRule(max_iter=30, success_threshold=0.0, stall_window=10**9))
        e = 0.3
        for t in range(1, 31):
            qh = 0.7 * 1.0 / (1e-9 + 1.0 * e)
            e = mmse_update(0.3, qh)
        assert out.iterations == 30
        assert abs(out.final_profile[0] - e) <= 1e-14

    def test_easy_single_system_succeeds_fast(self):
        ctx = _ctx(alpha_b=0.9, rho=0.1, delta=1e-12)
        out = se_run(ctx)
        assert out.status is SEStatus.SUCCESS
        assert out.iterations < 100

    def test_monotone_decrease_and_front(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            L = int(rng.integers(6, 40))
            w = int(rng.integers(1, min(4, L)))
            w_s = int(rng.integers(0, min(6, L)))
            rho = float(rng.uniform(0.05, 0.8))
            ab = float(rng.uniform(rho * 0.8, 1.0))
            ctx = _ctx(L=L, w=w, w_s=w_s, alpha_b=min(ab, 1.0), alpha_s=1.0,
                       rho=rho, delta=10.0 ** -rng.integers(6, 13))
            stop = StopRule(max_iter=60, success_threshold=0.0, stall_window=10**9,
                            record_profiles=1)
            out = se_run(ctx, stop=stop)
            profs = np.array([p for _, p in out.profiles])
            diffs = np.diff(profs, axis=0)
            assert np.all(diffs <= 1e-14), "profile must decrease componentwise"
            assert np.all(profs >= -1e-16) and np.all(profs <= ctx.params.rho + 1e-14)
            fronts = out.front_trace[:, 1]
            assert np.all(np.diff(fronts) >= 0), "front must not retreat"

    def test_qhat_nonnegative(self):
        ctx = _ctx(L=12, w=2, w_s=2, alpha_b=0.4, alpha_s=0.9, rho=0.25, delta=1e-8)
        E = np.full(12, 0.25)
        for _ in range(5):
            E, qh = se_step(E, ctx)
            assert np.all(qh >= 0.0)

    def test_stall_detection(self):
        # below threshold, no seed: converges to the bad fixed point and stalls
        ctx = _ctx(L=40, w=1, alpha_b=0.45, rho=0.4, delta=1e-12)
        out = se_run(ctx, stop=StopRule(max_iter=20_000))
        assert out.status is SEStatus.STALLED
        assert out.iterations < 20_000


class TestSuccessThreshold:
    def test_delta_adaptive(self):
        ctx = _ctx(alpha_b=0.9, rho=0.4, delta=1e-10)
        th = resolve_success_threshold(ctx, StopRule())
        e_good = single_system_fixed_point(0.4, 0.9, 1e-10, start=0.0)
        assert th == pytest.approx(10.0 * e_good)
        assert 1e-11 < th < 1e-8

    def test_fallback_when_no_good_branch(self):
        # alpha at rho: reconstruction impossible, informative start drifts up
        ctx = _ctx(alpha_b=0.4, rho=0.4, delta=1e-12)
        assert resolve_success_threshold(ctx, StopRule()) == 1e-8

    def test_explicit_override(self):
        ctx = _ctx(alpha_b=0.9, rho=0.4, delta=1e-10)
        assert resolve_success_threshold(ctx, StopRule(success_threshold=3e-7)) == 3e-7


class TestWavefront:
    def test_nothing_reconstructed(self):
        assert wavefront_position(np.full(9, 0.4), 1e-6) == 0

    def test_fully_reconstructed(self):
        assert wavefront_position(np.zeros(9), 1e-6) == 9

    def test_prefix_rule_ignores_detached_block(self):
        prof = np.array([1e-9, 1e-9, 0.4, 1e-9])
        assert wavefront_position(prof, 1e-6) == 2


class TestPropagationSpeed:
    def test_stalled_is_zero(self):
        ctx = _ctx(L=60, w=1, w_s=4, alpha_b=0.45, alpha_s=1.0, rho=0.4, delta=1e-12)
        out = se_run(ctx, stop=StopRule(max_iter=10_000))
        assert out.status is SEStatus.STALLED
        assert propagation_speed(out, ctx) == 0.0

    def test_positive_above_threshold(self):
        ctx = _ctx(L=120, w=1, w_s=10, alpha_b=0.50, alpha_s=1.0, rho=0.4, delta=1e-12)
        out = se_run(ctx)
        assert out.status is SEStatus.SUCCESS
        v = propagation_speed(out, ctx)
        assert v > 0.0

    def test_short_window_warns(self):
        ctx = _ctx(L=30, w=1, w_s=4, alpha_b=0.8, alpha_s=1.0, rho=0.2, delta=1e-12)
        out = se_run(ctx)
        assert out.status is SEStatus.SUCCESS
        with pytest.warns(UserWarning):
            v = propagation_speed(out, ctx)
        assert v == 0.0
