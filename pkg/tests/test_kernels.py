"""Backend cross-checks: the Cython core and the NumPy fallback must agree."""

import numpy as np
import pytest

from scse import _kernels_numpy, kernels
from scse.model import CouplingSpec, ProblemParams
from scse.state_evolution import SEContext, g_integral


def _qhat_grid():
    rng = np.random.default_rng(42)
    return np.concatenate([
        [0.0, 1e-300, 1e-16, 1.0, 1.0 + 1e-12, 1e12, 1e100],
        np.logspace(-8, 14, 120),
        rng.uniform(0.0, 4.0, 40),
    ])


def test_backend_selected():
    assert kernels.backend_name() in ("cython", "numpy")


@pytest.mark.parametrize("rho", [0.01, 0.12, 0.4, 0.5, 0.9, 0.99, 1.0])
def test_c_values_backends_agree(rho):
    qh = _qhat_grid()
    ours = kernels.c_values(rho, qh)
    ref = _kernels_numpy.c_values(rho, qh, kernels.GL_X01, kernels.GL_W01)
    np.testing.assert_allclose(ours, ref, rtol=5e-14, atol=1e-300)


def test_c_values_scalar_matches_batch():
    # per-element results must not depend on what else is in the batch
    qh = _qhat_grid()
    batch = kernels.c_values(0.4, qh)
    singles = np.array([kernels.c_values(0.4, np.array([q]))[0] for q in qh[:40]])
    np.testing.assert_allclose(batch[:40], singles, rtol=1e-13)


def test_se_step_backends_agree():
    spec = CouplingSpec(L=50, w=2, w_s=5, alpha_b=0.5, alpha_s=1.0)
    ctx = SEContext.from_spec(spec, ProblemParams(0.3, 1e-10))
    rng = np.random.default_rng(3)
    E = rng.uniform(0.0, 0.3, 50)
    q_cy, e_cy = kernels.se_step_arrays(ctx.coupling, ctx.alphas, 0.3, 1e-10, E, 2)
    q_np, e_np = _kernels_numpy.se_step(
        ctx.coupling, ctx.alphas, 0.3, 1e-10, E, 2, kernels.GL_X01, kernels.GL_W01
    )
    np.testing.assert_allclose(q_cy, q_np, rtol=1e-13)
    np.testing.assert_allclose(e_cy, e_np, rtol=1e-13)


def test_fixed_rule_meets_refined():
    # the production rule must sit within the g_integral refinement result
    rng = np.random.default_rng(7)
    for rho in (0.05, 0.2, 0.4, 0.6, 0.95):
        qh = np.concatenate([np.logspace(-6, 13, 60), rng.uniform(0, 3, 15)])
        base = (1.0 - kernels.c_values(rho, qh)) / rho
        refined = np.array([g_integral(rho, q) for q in qh])
        np.testing.assert_allclose(base, refined, rtol=5e-11)


def test_edge_cases():
    assert kernels.c_values(1.0, np.array([0.0, 5.0, 1e12])) == pytest.approx([0.0, 0.0, 0.0])
    assert kernels.c_values(0.3, np.array([0.0]))[0] == pytest.approx(0.7, abs=1e-15)
