"""Seeded spatially coupled compressed sensing: ensembles, state evolution,
thresholds, and finite-size AMP validation."""

from .model import (
    BoundaryRule,
    CouplingSpec,
    ProblemParams,
    ShapeFunction,
    ShapeKind,
    build_alpha_profile,
    build_coupling_matrix,
    effective_alpha,
    flat_shape,
    shape_weight,
    tilted_shape,
)
from .state_evolution import (
    SEContext,
    SEOutcome,
    SEStatus,
    StopRule,
    g_integral,
    mmse_update,
    propagation_speed,
    se_run,
    se_step,
    wavefront_position,
)
from .thresholds import (
    BracketError,
    SeedBoundary,
    ThresholdKind,
    ThresholdResult,
    alpha_c_estimate,
    find_alpha_bp,
    find_alpha_w,
    minimize_effective_alpha,
    phase_diagram,
    seed_boundary,
)
from .amp import (
    AmpDivergenceError,
    Instance,
    amp_run,
    denoise,
    generate_instance,
    se_amp_deviation,
    validate_against_se,
)

__version__ = "0.1.0"
