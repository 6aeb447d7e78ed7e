"""Service operations: pure request -> response functions.

The FastAPI routes and the CLI's in-process client both dispatch here, so
local and remote invocations exercise exactly the same code path.
"""

from __future__ import annotations

import math

import numpy as np

from .. import __version__, bounds as bounds_mod
from ..certify import CoverageQuery, coverage_exact, coverage_mc, residual_quantile
from ..confident import ConfidentConfig, error_audit, pairs_from_dicts, run_confident
from ..constraints import family_from_dict
from ..experiments import (
    ProblemSourceModel,
    region_from_model,
    resolve_problem,
    run_experiment,
)
from ..solver import CoverageTarget, RunConfig, StopRule, run_pfm
from ..steps import StepParams
from . import schemas


def handle_health():
    return schemas.HealthResponse(status="ok", version=__version__)


def handle_generate(req: schemas.GenerateRequest) -> schemas.GenerateResponse:
    problem = resolve_problem(ProblemSourceModel(generator=req.generator))
    doc = problem.family.to_dict()
    doc["metadata"] = problem.metadata()
    return schemas.GenerateResponse(problem=schemas.ProblemDocument.model_validate(doc))


def _family_and_start(problem_doc, x0=None):
    family = family_from_dict(problem_doc.to_family_dict())
    if x0 is not None:
        start = np.asarray(x0, dtype=float)
    else:
        meta = problem_doc.metadata or {}
        start = np.asarray(meta["x0"], dtype=float)
    return family, start


def _stop_rule(config):
    return StopRule(
        max_iters=config.max_iters,
        residual_target=config.residual_target,
        coverage_target=None
        if config.coverage_stop is None
        else CoverageTarget(
            eps=config.coverage_stop.eps,
            gamma=config.coverage_stop.gamma,
            check_every=config.coverage_stop.check_every,
        ),
    )


def handle_solve(req: schemas.SolveRequest) -> schemas.SolveResponse:
    family, start = _family_and_start(req.problem, req.x0)
    pairs = None
    if req.solver.kind == "pfm":
        config = req.solver.config
        trace = run_pfm(
            family,
            start,
            RunConfig(
                batch_size=config.batch_size,
                stop=_stop_rule(config),
                step=StepParams(delta=config.delta),
                region=region_from_model(config.region),
                seed=req.seed,
                replacement=config.replacement,
            ),
        )
    else:
        config = req.solver.config
        run = run_confident(
            family,
            start,
            ConfidentConfig(
                gamma=config.gamma,
                alpha=config.alpha,
                stop=_stop_rule(config),
                step=StepParams(delta=config.delta),
                region=region_from_model(config.region),
                seed=req.seed,
            ),
        )
        trace = run.trace
        pairs = [
            schemas.PairDoc(k=p.k, eps=p.eps, batch_size=p.batch_size_used, x=p.x.tolist())
            for p in run.pairs
        ]
    final_residual = trace.last_residual
    return schemas.SolveResponse(
        iterations=trace.iterations,
        stop_reason=trace.stop_reason,
        final_x=trace.x_final.tolist(),
        final_residual=None if math.isnan(final_residual) else final_residual,
        moves=trace.moves,
        cumulative_samples=trace.cumulative_samples,
        trace=[
            schemas.TraceRowDoc(
                k=r.k, residual=r.residual, batch_argmax=r.batch_argmax, moved=r.moved
            )
            for r in trace.records
        ]
        if req.include_trace
        else None,
        pairs=pairs,
    )


def handle_bounds(req: schemas.BoundsRequest) -> schemas.BoundsResponse:
    inputs = bounds_mod.BoundInputs(
        lipschitz=req.lipschitz,
        dist0=req.dist0,
        eps=req.eps,
        gamma=req.gamma,
        batch_size=req.batch_size,
    )
    growth = (
        None
        if req.growth is None
        else bounds_mod.GrowthProfile(
            mu=req.growth.mu, degree=req.growth.degree, delta_mass=req.growth.delta_mass
        )
    )
    confident = bounds_mod.confident_iteration_bounds(inputs, growth=growth)
    return schemas.BoundsResponse(
        lipschitz=req.lipschitz,
        dist0=req.dist0,
        eps=req.eps,
        gamma=req.gamma,
        batch_size=req.batch_size,
        p=inputs.p,
        deterministic_budget=inputs.deterministic_budget,
        expected_iterations=bounds_mod.expected_iterations(inputs),
        expected_iterations_growth=None
        if growth is None
        else bounds_mod.expected_iterations_growth(inputs, growth),
        confident_basic=confident.basic,
        confident_growth=confident.growth,
        concentration_tail=None
        if req.tail_at is None
        else bounds_mod.concentration_tail(inputs, req.tail_at),
    )


def handle_coverage_exact(req: schemas.CoverageExactRequest) -> schemas.CoverageExactResponse:
    family = family_from_dict(req.problem.to_family_dict())
    cov = coverage_exact(family, CoverageQuery(x=np.asarray(req.x, dtype=float), eps=req.eps))
    return schemas.CoverageExactResponse(coverage=cov)


def handle_coverage_mc(req: schemas.CoverageMcRequest) -> schemas.CoverageMcResponse:
    family = family_from_dict(req.problem.to_family_dict())
    est = coverage_mc(
        family,
        CoverageQuery(x=np.asarray(req.x, dtype=float), eps=req.eps),
        req.trials,
        np.random.default_rng(req.seed),
    )
    return schemas.CoverageMcResponse(
        estimate=est.estimate, lower=est.lower, upper=est.upper, trials=est.trials
    )


def handle_quantile(req: schemas.QuantileRequest) -> schemas.QuantileResponse:
    family = family_from_dict(req.problem.to_family_dict())
    level = residual_quantile(family, np.asarray(req.x, dtype=float), req.gamma)
    return schemas.QuantileResponse(residual=level)


def handle_audit(req: schemas.AuditRequest) -> schemas.AuditResponse:
    family = family_from_dict(req.problem.to_family_dict())
    pairs = pairs_from_dicts([p.model_dump() for p in req.pairs])
    report = error_audit(
        pairs,
        family,
        req.gamma,
        trials=req.trials,
        rng=np.random.default_rng(req.seed),
    )
    return schemas.AuditResponse(
        gamma=report.gamma,
        mode=report.mode,
        n_pairs=report.n_pairs,
        error_count=report.error_count,
        first_error_index=report.first_error_index,
        first_error_k=report.first_error_k,
        pairs=[
            schemas.AuditPairDoc(
                k=p.k,
                eps=p.eps,
                coverage=p.coverage,
                error=p.error,
                interval=None if p.interval is None else list(p.interval),
            )
            for p in report.pairs
        ],
    )


def handle_hitting_time(req: schemas.HittingTimeRequest) -> schemas.HittingTimeResponse:
    summary = bounds_mod.simulate_hitting_time(
        req.target, req.p, req.trials, np.random.default_rng(req.seed), shards=req.shards
    )
    return schemas.HittingTimeResponse(
        mean=summary.mean,
        variance=summary.variance,
        trials=summary.trials,
        target=summary.target,
        p=summary.p,
        histogram=[[int(s), int(c)] for s, c in zip(summary.steps, summary.counts)],
    )


def handle_experiment(req: schemas.ExperimentRequest):
    return run_experiment(req.spec, workers=req.workers, write=False)
