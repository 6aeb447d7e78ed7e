"""Minibatch Polyak-step solvers for stochastic convex feasibility.

Find a point satisfying most of a family of convex constraints: given a
residual level eps and a tolerated coverage deficit gamma, reach an iterate
whose constraint values are at most eps on a constraint mass of at least
1 - gamma. The package bundles the solvers, coverage oracles, closed-form
iteration-bound calculators, problem generators with ground-truth metadata,
an experiment harness, and a small HTTP service plus CLI on top.
"""

from .bounds import (
    BoundInputs,
    ConfidentBounds,
    GrowthProfile,
    HittingTimeSummary,
    concentration_tail,
    confident_iteration_bounds,
    expected_iterations,
    expected_iterations_growth,
    simulate_hitting_time,
    success_probability,
)
from .certify import (
    CoverageEstimate,
    CoverageQuery,
    coverage_exact,
    coverage_mc,
    residual_quantile,
    wilson_interval,
)
from .confident import (
    AuditReport,
    CertifiedPair,
    ConfidentConfig,
    ConfidentRun,
    error_audit,
    load_pairs,
    minimal_batch_size,
    run_confident,
    schedule_batch_size,
)
from .constraints import (
    Affine,
    BallDistance,
    FiniteUniformFamily,
    GaussianParams,
    MaxOf,
    ParametricFamily,
    Quadratic,
    SampleBatch,
    UniformBox,
    WorkingBall,
    family_from_dict,
    load_family,
    save_family,
)
from .errors import (
    DimensionMismatchError,
    InfeasibleConstraintError,
    PolyakFMError,
    SampleSpaceError,
    SpecValidationError,
)
from .problems import (
    GeneratedProblem,
    GrowthEstimate,
    estimate_growth,
    feasible_distance,
    gen_linear,
    gen_quadratic,
    interval_problem,
    load_problem,
    projection_distance_qp,
    save_problem,
)
from .solver import (
    CoverageTarget,
    IterationRecord,
    RunConfig,
    RunTrace,
    SolverState,
    StopRule,
    pfm_iterate,
    run_pfm,
)
from .steps import (
    BallRegion,
    BoxRegion,
    StepParams,
    check_decrease,
    polyak_step,
    project,
)

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "AuditReport",
    "BallDistance",
    "BallRegion",
    "BoundInputs",
    "BoxRegion",
    "CertifiedPair",
    "ConfidentBounds",
    "ConfidentConfig",
    "ConfidentRun",
    "CoverageEstimate",
    "CoverageQuery",
    "CoverageTarget",
    "DimensionMismatchError",
    "FiniteUniformFamily",
    "GaussianParams",
    "GeneratedProblem",
    "GrowthEstimate",
    "GrowthProfile",
    "HittingTimeSummary",
    "InfeasibleConstraintError",
    "IterationRecord",
    "MaxOf",
    "ParametricFamily",
    "PolyakFMError",
    "Quadratic",
    "RunConfig",
    "RunTrace",
    "SampleBatch",
    "SampleSpaceError",
    "SolverState",
    "SpecValidationError",
    "StepParams",
    "StopRule",
    "UniformBox",
    "WorkingBall",
    "check_decrease",
    "concentration_tail",
    "confident_iteration_bounds",
    "coverage_exact",
    "coverage_mc",
    "error_audit",
    "estimate_growth",
    "expected_iterations",
    "expected_iterations_growth",
    "family_from_dict",
    "feasible_distance",
    "gen_linear",
    "gen_quadratic",
    "interval_problem",
    "load_family",
    "load_pairs",
    "load_problem",
    "minimal_batch_size",
    "pfm_iterate",
    "polyak_step",
    "project",
    "projection_distance_qp",
    "residual_quantile",
    "run_confident",
    "run_pfm",
    "save_family",
    "save_problem",
    "schedule_batch_size",
    "simulate_hitting_time",
    "success_probability",
    "wilson_interval",
]
