"""Seed-replicated experiment harness.

An experiment spec (JSON) names a problem (file or generator), a solver
with its configuration, a replication count, and a list of (eps, gamma)
targets. Running it executes independent solver runs with seeds
``base, base+1, ...``, measures per-target hitting iterations (first
iterate whose exact coverage reaches 1 - gamma, and first iteration whose
batch residual falls to eps), attaches the closed-form bound values
computed from the problem's metadata, and evaluates pass/fail checks
comparing the two.

CSV output carries the per-replication rows and is byte-reproducible for
identical specs; timestamps and environment details live only in the JSON
report.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import bounds as bounds_mod
from .confident import ConfidentConfig, error_audit, run_confident
from .errors import SpecValidationError
from .problems import gen_linear, gen_quadratic, interval_problem, load_problem, problem_from_dict
from .solver import CoverageTarget, RunConfig, SolverState, StopRule, pfm_iterate
from .steps import BallRegion, BoxRegion, StepParams


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# Spec models
# ---------------------------------------------------------------------------


class TargetModel(_Strict):
    eps: float = Field(gt=0)
    gamma: float = Field(gt=0, lt=1)
    use_growth: bool = False


class NoRegionModel(_Strict):
    kind: Literal["none"]


class BoxRegionModel(_Strict):
    kind: Literal["box"]
    lo: list[float]
    hi: list[float]


class BallRegionModel(_Strict):
    kind: Literal["ball"]
    center: list[float]
    radius: float = Field(gt=0)


RegionUnion = Annotated[
    Union[NoRegionModel, BoxRegionModel, BallRegionModel], Field(discriminator="kind")
]


class CoverageStopModel(_Strict):
    eps: float
    gamma: float = Field(gt=0, lt=1)
    check_every: int = Field(default=1, ge=1)


class PfmConfigModel(_Strict):
    batch_size: int = Field(ge=1)
    delta: float = Field(default=1.0, gt=0, lt=2)
    replacement: Literal["with", "without"] = "with"
    max_iters: int = Field(default=1000, ge=1)
    residual_target: Optional[float] = None
    coverage_stop: Optional[CoverageStopModel] = None
    region: Optional[RegionUnion] = None


class ConfidentConfigModel(_Strict):
    gamma: float = Field(gt=0, lt=1)
    alpha: float = Field(gt=0, lt=1)
    delta: float = Field(default=1.0, gt=0, lt=2)
    max_iters: int = Field(default=1000, ge=1)
    residual_target: Optional[float] = None
    coverage_stop: Optional[CoverageStopModel] = None
    region: Optional[RegionUnion] = None


class PfmSolverModel(_Strict):
    kind: Literal["pfm"]
    config: PfmConfigModel


class ConfidentSolverModel(_Strict):
    kind: Literal["confident"]
    config: ConfidentConfigModel


SolverUnion = Annotated[
    Union[PfmSolverModel, ConfidentSolverModel], Field(discriminator="kind")
]


class LinearGeneratorModel(_Strict):
    kind: Literal["linear"]
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    sharpness: float = Field(default=1.0, gt=0, le=1)
    dist: float = Field(default=4.0, gt=0)
    interior_radius: float = Field(default=0.5, gt=0)
    seed: int = 0


class QuadraticGeneratorModel(_Strict):
    kind: Literal["quadratic"]
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    tight_fraction: float = Field(default=0.5, gt=0, le=1)
    dist: float = Field(default=4.0, gt=0)
    interior_radius: float = Field(default=1.0, gt=0)
    center_spread: float = Field(default=0.5, ge=0)
    radius_jitter: float = Field(default=0.5, ge=0)
    seed: int = 0


class IntervalGeneratorModel(_Strict):
    kind: Literal["interval"]
    x0: float = 5.0
    half_width: float = Field(default=1.0, gt=0)


GeneratorUnion = Annotated[
    Union[LinearGeneratorModel, QuadraticGeneratorModel, IntervalGeneratorModel],
    Field(discriminator="kind"),
]


class ProblemSourceModel(_Strict):
    file: Optional[str] = None
    generator: Optional[GeneratorUnion] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.file is None) == (self.generator is None):
            raise ValueError("exactly one of 'file' or 'generator' must be given")
        return self


class OutputModel(_Strict):
    dir: str
    prefix: str = "experiment"


class ExperimentSpec(_Strict):
    problem: ProblemSourceModel
    solver: SolverUnion
    replications: int = Field(ge=1)
    seed: int = 0
    targets: list[TargetModel] = Field(default_factory=list)
    output: Optional[OutputModel] = None


_UNION_TAGS = {
    "pfm",
    "confident",
    "linear",
    "quadratic",
    "interval",
    "none",
    "box",
    "ball",
}


def _format_path(loc):
    parts = []
    for piece in loc:
        if isinstance(piece, str) and piece in _UNION_TAGS:
            continue  # discriminated-union tag, not part of the document path
        parts.append(str(piece))
    return ".".join(parts) if parts else "$"


def validate_spec(raw):
    """Parse and validate a JSON experiment spec.

    Accepts a JSON string or an already-decoded dict. Raises
    :class:`SpecValidationError` carrying one (path, message) entry per
    violation; unknown keys are violations.
    """
    if isinstance(raw, (str, bytes)):
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as err:
            raise SpecValidationError([{"path": "$", "message": f"invalid JSON: {err}"}]) from err
    else:
        data = raw
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as err:
        raise SpecValidationError(
            [{"path": _format_path(e["loc"]), "message": e["msg"]} for e in err.errors()]
        ) from err


# ---------------------------------------------------------------------------
# Report models
# ---------------------------------------------------------------------------


class TargetHitModel(_Strict):
    eps: float
    gamma: float
    k_coverage: Optional[int] = None
    k_residual: Optional[int] = None


class ReplicationRowModel(_Strict):
    replication: int
    seed: int
    iterations: int
    stop_reason: str
    moves: int
    final_residual: Optional[float] = None
    cumulative_samples: int
    targets: list[TargetHitModel] = Field(default_factory=list)
    audit_error_count: Optional[int] = None
    audit_first_error_k: Optional[int] = None


class TargetBoundsModel(_Strict):
    eps: float
    gamma: float
    dist_used: Optional[str] = None
    p: Optional[float] = None
    deterministic_budget: Optional[int] = None
    expected_iterations: Optional[float] = None
    expected_iterations_growth: Optional[float] = None
    confident_basic: Optional[int] = None
    confident_growth: Optional[float] = None
    note: Optional[str] = None


class TargetAggregateModel(_Strict):
    eps: float
    gamma: float
    mean_k_coverage: Optional[float] = None
    mean_k_residual: Optional[float] = None
    coverage_hit_fraction: float = 0.0
    residual_hit_fraction: float = 0.0


class AggregateModel(_Strict):
    mean_iterations: float
    median_iterations: float
    q10_iterations: float
    q90_iterations: float
    mean_moves: float
    mean_cumulative_samples: float
    per_target: list[TargetAggregateModel] = Field(default_factory=list)


class CheckModel(_Strict):
    name: str
    passed: bool
    detail: str


class ProblemMetaModel(_Strict):
    dimension: int
    size: Optional[int] = None
    lipschitz_bound: Optional[float] = None
    dist_upper: Optional[float] = None
    dist_exact: Optional[float] = None
    growth: Optional[dict] = None


class ExperimentReportModel(_Strict):
    spec: ExperimentSpec
    problem: ProblemMetaModel
    rows: list[ReplicationRowModel]
    aggregate: AggregateModel
    target_bounds: list[TargetBoundsModel]
    checks: list[CheckModel]
    all_passed: bool
    environment: dict = Field(default_factory=dict)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def region_from_model(model):
    if model is None or model.kind == "none":
        return None
    if model.kind == "box":
        return BoxRegion(np.asarray(model.lo, dtype=float), np.asarray(model.hi, dtype=float))
    return BallRegion(np.asarray(model.center, dtype=float), model.radius)


def resolve_problem(source, base_path=None):
    if source.file is not None:
        path = source.file
        if base_path is not None:
            import os

            path = path if os.path.isabs(path) else os.path.join(base_path, path)
        return load_problem(path)
    gen = source.generator
    if gen.kind == "linear":
        return gen_linear(
            gen.n,
            gen.m,
            gen.sharpness,
            np.random.default_rng(gen.seed),
            dist=gen.dist,
            interior_radius=gen.interior_radius,
        )
    if gen.kind == "quadratic":
        return gen_quadratic(
            gen.n,
            gen.m,
            np.random.default_rng(gen.seed),
            tight_fraction=gen.tight_fraction,
            dist=gen.dist,
            interior_radius=gen.interior_radius,
            center_spread=gen.center_spread,
            radius_jitter=gen.radius_jitter,
        )
    return interval_problem(x0=gen.x0, half_width=gen.half_width)


def _coverage_hits_at(values, targets, hits, k):
    for i, target in enumerate(targets):
        if hits[i] is None:
            coverage = float(np.count_nonzero(values <= target.eps)) / values.shape[0]
            if coverage >= 1.0 - target.gamma:
                hits[i] = k


def _run_pfm_replication(problem, config, seed, targets):
    family = problem.family
    cfg = RunConfig(
        batch_size=config.batch_size,
        stop=StopRule(
            max_iters=config.max_iters,
            residual_target=config.residual_target,
            coverage_target=None
            if config.coverage_stop is None
            else CoverageTarget(
                eps=config.coverage_stop.eps,
                gamma=config.coverage_stop.gamma,
                check_every=config.coverage_stop.check_every,
            ),
        ),
        step=StepParams(delta=config.delta),
        region=region_from_model(config.region),
        seed=seed,
        replacement=config.replacement,
    )
    track_coverage = bool(targets) and family.is_finite
    k_cov = [None] * len(targets)
    k_res = [None] * len(targets)
    rng = np.random.default_rng(seed)
    state = SolverState(x=problem.x0.copy(), last_residual=math.nan, k=0, rng=rng)
    if track_coverage:
        _coverage_hits_at(family.values_at(state.x), targets, k_cov, 0)
    moves = 0
    cumulative = 0
    stop_reason = None
    stop = cfg.stop
    while stop_reason is None and state.k < stop.max_iters:
        state = pfm_iterate(state, family, cfg)
        cumulative += cfg.batch_size
        if state.last_residual > 0.0:
            moves += 1
        for i, target in enumerate(targets):
            if k_res[i] is None and state.last_residual <= target.eps:
                k_res[i] = state.k
        if track_coverage and any(h is None for h in k_cov):
            _coverage_hits_at(family.values_at(state.x), targets, k_cov, state.k)
        if stop.residual_target is not None and state.last_residual <= stop.residual_target:
            stop_reason = "residual_target"
        elif (
            stop.coverage_target is not None
            and state.k % stop.coverage_target.check_every == 0
            and _coverage_reached(family, state.x, stop.coverage_target)
        ):
            stop_reason = "coverage_target"
        elif targets and all(h is not None for h in k_res) and (
            not track_coverage or all(h is not None for h in k_cov)
        ):
            stop_reason = "targets"
    if stop_reason is None:
        stop_reason = "max_iters"
    return ReplicationRowModel(
        replication=-1,
        seed=seed,
        iterations=state.k,
        stop_reason=stop_reason,
        moves=moves,
        final_residual=None if math.isnan(state.last_residual) else state.last_residual,
        cumulative_samples=cumulative,
        targets=[
            TargetHitModel(eps=t.eps, gamma=t.gamma, k_coverage=k_cov[i], k_residual=k_res[i])
            for i, t in enumerate(targets)
        ],
    )


def _coverage_reached(family, x, target):
    values = family.values_at(x)
    return float(np.count_nonzero(values <= target.eps)) / values.shape[0] >= 1.0 - target.gamma


def _run_confident_replication(problem, config, seed, targets):
    family = problem.family
    cfg = ConfidentConfig(
        gamma=config.gamma,
        alpha=config.alpha,
        stop=StopRule(
            max_iters=config.max_iters,
            residual_target=config.residual_target,
            coverage_target=None
            if config.coverage_stop is None
            else CoverageTarget(
                eps=config.coverage_stop.eps,
                gamma=config.coverage_stop.gamma,
                check_every=config.coverage_stop.check_every,
            ),
        ),
        step=StepParams(delta=config.delta),
        region=region_from_model(config.region),
        seed=seed,
    )
    run = run_confident(family, problem.x0, cfg)
    k_cov = [None] * len(targets)
    k_res = [None] * len(targets)
    if targets:
        for i, target in enumerate(targets):
            for record in run.trace.records:
                if record.residual <= target.eps:
                    k_res[i] = record.k
                    break
        if family.is_finite:
            for pair in run.pairs:
                if all(h is not None for h in k_cov):
                    break
                values = family.values_at(pair.x)
                _coverage_hits_at(values, targets, k_cov, pair.k)
    audit = error_audit(run.pairs, family, config.gamma) if family.is_finite else None
    return ReplicationRowModel(
        replication=-1,
        seed=seed,
        iterations=run.trace.iterations,
        stop_reason=run.trace.stop_reason,
        moves=run.trace.moves,
        final_residual=None
        if math.isnan(run.trace.last_residual)
        else run.trace.last_residual,
        cumulative_samples=run.trace.cumulative_samples,
        targets=[
            TargetHitModel(eps=t.eps, gamma=t.gamma, k_coverage=k_cov[i], k_residual=k_res[i])
            for i, t in enumerate(targets)
        ],
        audit_error_count=None if audit is None else audit.error_count,
        audit_first_error_k=None if audit is None else audit.first_error_k,
    )


def _replication_payload_run(payload):
    """Entry point for worker processes; rebuilds everything from dicts."""
    problem = problem_from_dict(payload["problem"])
    spec = ExperimentSpec.model_validate(payload["spec"])
    row = _run_one(problem, spec, payload["index"])
    return payload["index"], row.model_dump()


def _run_one(problem, spec, index):
    seed = spec.seed + index
    if spec.solver.kind == "pfm":
        row = _run_pfm_replication(problem, spec.solver.config, seed, spec.targets)
    else:
        row = _run_confident_replication(problem, spec.solver.config, seed, spec.targets)
    return row.model_copy(update={"replication": index})


def _target_bounds(problem, spec):
    results = []
    lipschitz = problem.family.lipschitz_bound
    dist_exact = problem.dist_exact
    dist_upper = problem.dist_upper
    for target in spec.targets:
        kwargs = {"eps": target.eps, "gamma": target.gamma}
        if lipschitz is None or (dist_exact is None and dist_upper is None):
            results.append(
                TargetBoundsModel(**kwargs, note="problem metadata lacks lipschitz/dist")
            )
            continue
        dist_used = "exact" if dist_exact is not None else "upper"
        dist = dist_exact if dist_exact is not None else dist_upper
        if target.use_growth and problem.growth is None:
            raise ValueError(
                f"target eps={target.eps} requests growth bounds but the problem "
                "has no growth metadata"
            )
        is_pfm = spec.solver.kind == "pfm"
        batch = spec.solver.config.batch_size if is_pfm else 1
        try:
            inputs = bounds_mod.BoundInputs(
                lipschitz=lipschitz,
                dist0=dist,
                eps=target.eps,
                gamma=target.gamma,
                batch_size=batch,
            )
        except ValueError as err:
            results.append(TargetBoundsModel(**kwargs, dist_used=dist_used, note=str(err)))
            continue
        growth = problem.growth if target.use_growth else None
        expected_growth = None
        confident = bounds_mod.confident_iteration_bounds(inputs, growth=growth)
        if growth is not None and is_pfm:
            expected_growth = bounds_mod.expected_iterations_growth(inputs, growth)
        results.append(
            TargetBoundsModel(
                **kwargs,
                dist_used=dist_used,
                p=inputs.p if is_pfm else None,
                deterministic_budget=inputs.deterministic_budget,
                expected_iterations=bounds_mod.expected_iterations(inputs) if is_pfm else None,
                expected_iterations_growth=expected_growth,
                confident_basic=confident.basic,
                confident_growth=confident.growth,
            )
        )
    return results


def _aggregate(rows, targets):
    iters = np.array([r.iterations for r in rows], dtype=float)
    per_target = []
    for i, t in enumerate(targets):
        cov = [r.targets[i].k_coverage for r in rows]
        res = [r.targets[i].k_residual for r in rows]
        cov_hit = [c for c in cov if c is not None]
        res_hit = [c for c in res if c is not None]
        per_target.append(
            TargetAggregateModel(
                eps=t.eps,
                gamma=t.gamma,
                mean_k_coverage=float(np.mean(cov_hit)) if cov_hit else None,
                mean_k_residual=float(np.mean(res_hit)) if res_hit else None,
                coverage_hit_fraction=len(cov_hit) / len(rows),
                residual_hit_fraction=len(res_hit) / len(rows),
            )
        )
    return AggregateModel(
        mean_iterations=float(iters.mean()),
        median_iterations=float(np.median(iters)),
        q10_iterations=float(np.quantile(iters, 0.1)),
        q90_iterations=float(np.quantile(iters, 0.9)),
        mean_moves=float(np.mean([r.moves for r in rows])),
        mean_cumulative_samples=float(np.mean([r.cumulative_samples for r in rows])),
        per_target=per_target,
    )


def _checks(spec, rows, target_bounds):
    checks = []
    n = len(rows)
    for i, tb in enumerate(target_bounds):
        label = f"target[{i}](eps={tb.eps:g},gamma={tb.gamma:g})"
        if spec.solver.kind == "pfm" and tb.expected_iterations is not None:
            hits = [r.targets[i].k_coverage for r in rows]
            if any(h is None for h in hits):
                missing = sum(1 for h in hits if h is None)
                checks.append(
                    CheckModel(
                        name=f"mean_coverage_iters_le_expected {label}",
                        passed=False,
                        detail=f"{missing}/{n} replications never reached the coverage target",
                    )
                )
            else:
                mean = float(np.mean(hits))
                checks.append(
                    CheckModel(
                        name=f"mean_coverage_iters_le_expected {label}",
                        passed=mean <= tb.expected_iterations,
                        detail=f"mean {mean:.2f} vs bound {tb.expected_iterations:.2f}",
                    )
                )
        if spec.solver.kind == "confident" and tb.confident_basic is not None:
            hits = [r.targets[i].k_residual for r in rows]
            bad = [
                (r.replication, h)
                for r, h in zip(rows, hits)
                if h is None or h > tb.confident_basic
            ]
            checks.append(
                CheckModel(
                    name=f"residual_iters_le_confident_bound {label}",
                    passed=not bad,
                    detail=(
                        f"all {n} runs within {tb.confident_basic} iterations"
                        if not bad
                        else f"{len(bad)} runs exceeded {tb.confident_basic}: {bad[:5]}"
                    ),
                )
            )
    if spec.solver.kind == "confident" and all(r.audit_error_count is not None for r in rows):
        alpha = spec.solver.config.alpha
        error_runs = sum(1 for r in rows if r.audit_error_count > 0)
        budget = alpha * n + 3.0 * math.sqrt(n * alpha * (1.0 - alpha))
        checks.append(
            CheckModel(
                name="audit_error_runs_within_alpha",
                passed=error_runs <= budget,
                detail=f"{error_runs}/{n} runs had audit errors; budget {budget:.1f}",
            )
        )
    return checks


def run_experiment(spec, workers=1, out_dir=None, base_path=None, write=True):
    """Execute an experiment spec and assemble the report.

    ``workers > 1`` runs replications in separate processes; rows are
    keyed by replication index, so results do not depend on scheduling.
    Writes ``<prefix>_rows.csv`` and ``<prefix>_report.json`` when the
    spec (or ``out_dir``) names an output directory, unless ``write`` is
    False (the HTTP service returns the report instead of touching disk).
    """
    if isinstance(spec, (str, bytes, dict)):
        spec = validate_spec(spec)
    problem = resolve_problem(spec.problem, base_path=base_path)
    if spec.targets and not problem.family.is_finite:
        raise ValueError("coverage targets require a finite family (exact coverage)")
    target_bounds = _target_bounds(problem, spec)

    if workers > 1:
        problem_doc = problem.family.to_dict()
        problem_doc["metadata"] = problem.metadata()
        payloads = [
            {"problem": problem_doc, "spec": spec.model_dump(), "index": i}
            for i in range(spec.replications)
        ]
        rows = [None] * spec.replications
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for index, row in pool.map(_replication_payload_run, payloads):
                rows[index] = ReplicationRowModel.model_validate(row)
    else:
        rows = [_run_one(problem, spec, i) for i in range(spec.replications)]

    aggregate = _aggregate(rows, spec.targets)
    checks = _checks(spec, rows, target_bounds)
    report = ExperimentReportModel(
        spec=spec,
        problem=ProblemMetaModel(
            dimension=problem.family.dimension,
            size=problem.family.size if problem.family.is_finite else None,
            lipschitz_bound=problem.family.lipschitz_bound,
            dist_upper=problem.dist_upper,
            dist_exact=problem.dist_exact,
            growth=None if problem.growth is None else problem.growth.to_dict(),
        ),
        rows=rows,
        aggregate=aggregate,
        target_bounds=target_bounds,
        checks=checks,
        all_passed=all(c.passed for c in checks),
        environment={
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    )
    directory = out_dir if out_dir is not None else (spec.output.dir if spec.output else None)
    if write and directory is not None:
        write_report(report, directory, prefix=spec.output.prefix if spec.output else "experiment")
    return report


def rows_csv_text(report):
    """Per-replication rows as CSV; byte-identical across reruns of the
    same spec (no timestamps here)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [
        "replication",
        "seed",
        "iterations",
        "stop_reason",
        "moves",
        "final_residual",
        "cumulative_samples",
    ]
    n_targets = len(report.spec.targets)
    for i in range(n_targets):
        header += [f"k_coverage_{i}", f"k_residual_{i}"]
    header += ["audit_error_count", "audit_first_error_k"]
    writer.writerow(header)
    for row in report.rows:
        record = [
            row.replication,
            row.seed,
            row.iterations,
            row.stop_reason,
            row.moves,
            "" if row.final_residual is None else repr(row.final_residual),
            row.cumulative_samples,
        ]
        for hit in row.targets:
            record.append("" if hit.k_coverage is None else hit.k_coverage)
            record.append("" if hit.k_residual is None else hit.k_residual)
        record.append("" if row.audit_error_count is None else row.audit_error_count)
        record.append("" if row.audit_first_error_k is None else row.audit_first_error_k)
        writer.writerow(record)
    return buf.getvalue()


def write_report(report, directory, prefix="experiment"):
    import os

    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, f"{prefix}_rows.csv")
    json_path = os.path.join(directory, f"{prefix}_report.json")
    with open(csv_path, "w", newline="") as fh:
        fh.write(rows_csv_text(report))
    with open(json_path, "w") as fh:
        json.dump(report.model_dump(), fh, indent=2)
    return csv_path, json_path
