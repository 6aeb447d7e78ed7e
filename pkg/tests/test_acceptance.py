"""Acceptance suite: one test per release criterion.

Each test prints a PASS/FAIL line with the measured numbers (run with
``pytest tests/test_acceptance.py -v -s``). Expected values are recomputed
here from first principles (closed forms evaluated inline, enumeration,
independent oracles) rather than copied from the implementation.
"""

import math
import time

import numpy as np
import pytest

from polyakfm import (
    Affine,
    BoundInputs,
    ConfidentConfig,
    CoverageQuery,
    CoverageTarget,
    FiniteUniformFamily,
    RunConfig,
    StepParams,
    StopRule,
    check_decrease,
    concentration_tail,
    confident_iteration_bounds,
    coverage_exact,
    coverage_mc,
    error_audit,
    expected_iterations,
    gen_linear,
    gen_quadratic,
    polyak_step,
    residual_quantile,
    run_confident,
    run_pfm,
    schedule_batch_size,
    simulate_hitting_time,
    success_probability,
)
from conftest import point_with_positive_value, random_constraint_with_witness


def _verdict(cid, name, passed, detail):
    print(f"\n[{'PASS' if passed else 'FAIL'}] {cid} {name}: {detail}")
    assert passed, f"{cid} {name}: {detail}"


# ---------------------------------------------------------------------------
# C1: per-step decrease across the catalog, plain and extrapolated
# ---------------------------------------------------------------------------


def test_c01_per_step_decrease():
    start = time.time()
    rng = np.random.default_rng(101)
    failures = 0
    for i in range(10_000):
        n = int(rng.integers(1, 7))
        constraint, z = random_constraint_with_witness(rng, n)
        x = point_with_positive_value(rng, constraint, z)
        delta = 1.0 if i % 2 == 0 else float(rng.uniform(0.05, 1.95))
        value = constraint.value(x)
        g = constraint.subgradient(x)
        x_plus = polyak_step(x, value, g, StepParams(delta=delta))
        if not check_decrease(x, x_plus, z, value, g, delta=delta, slack=1e-9):
            failures += 1
    elapsed = time.time() - start
    _verdict(
        "C1",
        "per-step decrease",
        failures == 0 and elapsed < 10.0,
        f"{failures} failures in 10000 randomized steps, {elapsed:.1f}s (< 10s)",
    )


# ---------------------------------------------------------------------------
# C2 + C3: hitting-time expectation and concentration
# ---------------------------------------------------------------------------


def test_c02_hitting_time_expectation():
    start = time.time()
    summary = simulate_hitting_time(20, 0.3, 100_000, np.random.default_rng(202))
    elapsed = time.time() - start
    expected = 20.0 / 0.3
    rel_err = abs(summary.mean - expected) / expected
    _verdict(
        "C2",
        "hitting-time expectation",
        rel_err <= 0.01 and elapsed < 5.0,
        f"mean {summary.mean:.4f} vs {expected:.4f} (rel err {rel_err:.4%}), {elapsed:.1f}s (< 5s)",
    )


def test_c03_hitting_time_concentration():
    start = time.time()
    # the Bernoulli process with target 20 corresponds to scale^2 = 20
    inputs = BoundInputs(
        lipschitz=1.0, dist0=math.sqrt(20.0), eps=1.0, gamma=0.3, batch_size=1
    )
    assert inputs.p == 0.3 and inputs.deterministic_budget == 20
    trials = 1_000_000
    summary = simulate_hitting_time(20, 0.3, trials, np.random.default_rng(303), shards=8)
    threshold = math.ceil(2.0 * expected_iterations(inputs))
    violations = []
    for k in range(threshold, threshold + 31):
        bound = concentration_tail(inputs, k)
        sigma = math.sqrt(bound * (1.0 - bound) / trials)
        empirical = summary.probability(k)
        if empirical > bound + 3.0 * sigma:
            violations.append((k, empirical, bound))
    elapsed = time.time() - start
    _verdict(
        "C3",
        "hitting-time concentration",
        not violations and elapsed < 60.0,
        f"0 of 31 bins above the tail bound (threshold k={threshold}), "
        f"{elapsed:.1f}s (< 60s)" if not violations else f"violations: {violations}",
    )


# ---------------------------------------------------------------------------
# C4 + C5: expected-iteration bound end to end, and minibatch scaling
# ---------------------------------------------------------------------------

SCALING_BATCHES = (1, 2, 5, 10)


@pytest.fixture(scope="module")
def linear_coverage_runs():
    """Iterations to certified coverage on the criterion-4 system, 200
    seeds per batch size."""
    problem = gen_linear(10, 1000, 0.5, np.random.default_rng(1234), dist=4.0)
    eps = 0.1 * problem.family.lipschitz_bound * problem.dist_exact
    gamma = 0.1
    means = {}
    elapsed = {}
    for batch in SCALING_BATCHES:
        start = time.time()
        counts = []
        for seed in range(200):
            config = RunConfig(
                batch_size=batch,
                stop=StopRule(
                    max_iters=100_000,
                    coverage_target=CoverageTarget(eps=eps, gamma=gamma, check_every=1),
                ),
                seed=seed,
            )
            trace = run_pfm(problem.family, problem.x0, config)
            assert trace.stop_reason == "coverage_target"
            counts.append(trace.iterations)
        means[batch] = float(np.mean(counts))
        elapsed[batch] = time.time() - start
    return problem, eps, gamma, means, elapsed


def test_c04_expected_iterations_bound(linear_coverage_runs):
    problem, eps, gamma, means, elapsed = linear_coverage_runs
    inputs = BoundInputs(
        lipschitz=problem.family.lipschitz_bound,
        dist0=problem.dist_exact,
        eps=eps,
        gamma=gamma,
        batch_size=5,
    )
    bound = expected_iterations(inputs)
    runtime = elapsed[5]
    _verdict(
        "C4",
        "expected-iteration bound (L=5)",
        means[5] <= bound and runtime < 120.0,
        f"mean {means[5]:.2f} over 200 seeds <= bound {bound:.2f}, {runtime:.1f}s (< 120s)",
    )


def test_c05_minibatch_scaling(linear_coverage_runs):
    _, _, _, means, _ = linear_coverage_runs
    ratios = {batch: means[1] / means[batch] for batch in SCALING_BATCHES}
    in_window = {batch: batch / 2.0 <= ratios[batch] <= 2.0 * batch for batch in SCALING_BATCHES}
    _verdict(
        "C5",
        "minibatch scaling",
        all(in_window.values()),
        "ratios " + ", ".join(f"L={b}: {ratios[b]:.2f} in [{b / 2:.1f}, {2 * b}]" for b in SCALING_BATCHES),
    )


# ---------------------------------------------------------------------------
# C6: iterations grow affinely in log2(1/eps) on sharp linear systems
# ---------------------------------------------------------------------------


def test_c06_growth_scaling_sharp_linear():
    problem = gen_linear(
        5, 100, 1.0, np.random.default_rng(7), dist=4.0, interior_radius=0.001
    )
    dist = problem.dist_exact
    targets = [dist * 2.0 ** (-i) for i in range(1, 9)]
    seeds = 40
    hits = np.zeros((seeds, len(targets)))
    for seed in range(seeds):
        config = RunConfig(
            batch_size=5,
            stop=StopRule(max_iters=200_000, residual_target=targets[-1]),
            seed=seed,
        )
        trace = run_pfm(problem.family, problem.x0, config)
        assert trace.stop_reason == "residual_target"
        for i, eps in enumerate(targets):
            hits[seed, i] = trace.first_residual_at_most(eps)
    means = hits.mean(axis=0)
    log_inv_eps = np.arange(1, len(targets) + 1, dtype=float)
    slope, intercept = np.polyfit(log_inv_eps, means, 1)
    predicted = slope * log_inv_eps + intercept
    r2 = 1.0 - np.sum((means - predicted) ** 2) / np.sum((means - means.mean()) ** 2)
    quadratic_budget = (1.0 / targets[-1]) ** 2  # the eps^-2 worst case is enormous
    _verdict(
        "C6",
        "affine scaling in log2(1/eps)",
        r2 >= 0.9 and slope > 0 and means[-1] < 0.01 * quadratic_budget,
        f"R^2 {r2:.4f} (>= 0.9), slope {slope:.2f} iters per halving, "
        f"mean at tightest {means[-1]:.1f} iters",
    )


# ---------------------------------------------------------------------------
# C7 + C8: confidence guarantee and deterministic bound, 500 runs
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def confident_runs():
    problem = gen_linear(5, 200, 1.0, np.random.default_rng(99), dist=4.0)
    gamma, alpha = 0.1, 0.2
    eps = 0.1 * problem.family.lipschitz_bound * problem.dist_exact
    start = time.time()
    results = []
    for seed in range(500):
        config = ConfidentConfig(
            gamma=gamma,
            alpha=alpha,
            stop=StopRule(max_iters=500, residual_target=eps),
            seed=seed,
        )
        run = run_confident(problem.family, problem.x0, config)
        audit = error_audit(run.pairs, problem.family, gamma)
        results.append((run, audit))
    elapsed = time.time() - start
    return problem, gamma, alpha, eps, results, elapsed


def test_c07_confidence_guarantee(confident_runs):
    _, _, alpha, _, results, elapsed = confident_runs
    runs = len(results)
    error_runs = sum(1 for _, audit in results if audit.error_count > 0)
    budget = alpha * runs + 3.0 * math.sqrt(runs * alpha * (1.0 - alpha))
    _verdict(
        "C7",
        "confidence guarantee",
        error_runs <= budget and elapsed < 300.0,
        f"{error_runs}/{runs} runs with audit errors <= budget {budget:.1f}, "
        f"{elapsed:.1f}s (< 300s)",
    )


def test_c08_deterministic_iteration_bound(confident_runs):
    problem, _, _, eps, results, _ = confident_runs
    budget = 1 + math.floor(
        (problem.family.lipschitz_bound * problem.dist_upper / eps) ** 2
    )
    offenders = []
    error_free = 0
    for run, audit in results:
        if audit.error_count > 0:
            continue
        error_free += 1
        if run.trace.stop_reason != "residual_target" or run.trace.iterations > budget:
            offenders.append((run.trace.iterations, run.trace.stop_reason))
    worst = max(run.trace.iterations for run, audit in results if audit.error_count == 0)
    _verdict(
        "C8",
        "deterministic iteration bound",
        not offenders,
        f"all {error_free} error-free runs reached eps within {budget} iterations "
        f"(worst {worst}), zero tolerance",
    )


# ---------------------------------------------------------------------------
# C9: calculator spot values, recomputed independently
# ---------------------------------------------------------------------------


def test_c09_calculator_spot_values():
    # success probability: 1 - 0.9^10 evaluated directly
    p = success_probability(0.1, 10)
    p_direct = 1.0 - 0.9**10
    ok_p = abs(p - 0.651322) <= 1e-6 and abs(p - p_direct) < 1e-15

    # schedule sizes: ceil((1/0.1) ln(2 k^2 / 0.05))
    s1, s2 = schedule_batch_size(0.1, 0.05, 1), schedule_batch_size(0.1, 0.05, 2)
    ok_s = s1 == math.ceil(10.0 * math.log(40.0)) == 37
    ok_s = ok_s and s2 == math.ceil(10.0 * math.log(160.0)) == 51

    # confident basic bound: 1 + floor((1 * 10 / 1)^2)
    basic = confident_iteration_bounds(
        BoundInputs(lipschitz=1.0, dist0=10.0, eps=1.0, gamma=0.1, batch_size=1)
    ).basic
    ok_b = basic == 1 + math.floor(100.0) == 101

    _verdict(
        "C9",
        "calculator spot values",
        ok_p and ok_s and ok_b,
        f"p={p:.6f} (0.651322 +/- 1e-6), schedule k=1,2 -> {s1},{s2} (37,51), "
        f"confident basic {basic} (101)",
    )


# ---------------------------------------------------------------------------
# C10: Monte-Carlo coverage matches the exact oracle
# ---------------------------------------------------------------------------


def test_c10_oracle_equivalence():
    start = time.time()
    problems = []
    for seed in range(8):
        problems.append(gen_linear(3 + seed % 4, 50 + 30 * seed, 0.9, np.random.default_rng(seed)))
    for seed in range(8):
        problems.append(gen_quadratic(2 + seed % 3, 20 + 10 * seed, np.random.default_rng(seed)))
    ladders = [
        FiniteUniformFamily([Affine([1.0], -float(c)) for c in range(1, m + 1)])
        for m in (10, 25, 60, 100)
    ]

    agreements = 0
    cases = 0
    details = []
    rng = np.random.default_rng(1001)
    for problem in problems:
        family = problem.family
        # a point partway along the approach, at a level with mixed coverage
        x = problem.feasible_witness + 0.35 * (problem.x0 - problem.feasible_witness)
        eps = residual_quantile(family, x, 0.4)
        exact = coverage_exact(family, CoverageQuery(x=x, eps=eps))
        estimate = coverage_mc(family, CoverageQuery(x=x, eps=eps), 100_000, rng)
        cases += 1
        agreements += abs(estimate.estimate - exact) <= 0.01
        details.append(abs(estimate.estimate - exact))
    for family in ladders:
        x = np.array([family.size * 0.6])
        eps = residual_quantile(family, x, 0.5)
        exact = coverage_exact(family, CoverageQuery(x=x, eps=eps))
        estimate = coverage_mc(family, CoverageQuery(x=x, eps=eps), 100_000, rng)
        cases += 1
        agreements += abs(estimate.estimate - exact) <= 0.01
        details.append(abs(estimate.estimate - exact))
    elapsed = time.time() - start
    _verdict(
        "C10",
        "Monte-Carlo vs exact coverage",
        cases == 20 and agreements >= 19,
        f"{agreements}/{cases} problems within 0.01 (max |diff| {max(details):.4f}), "
        f"{elapsed:.1f}s",
    )
