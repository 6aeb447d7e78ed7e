import json
import math

import numpy as np
import pytest

from polyakfm import (
    Affine,
    BallDistance,
    CoverageQuery,
    CoverageTarget,
    FiniteUniformFamily,
    InfeasibleConstraintError,
    Quadratic,
    RunConfig,
    SolverState,
    StopRule,
    coverage_exact,
    gen_linear,
    pfm_iterate,
    run_pfm,
)


def config(batch_size=1, max_iters=100, **kwargs):
    stop = StopRule(
        max_iters=max_iters,
        residual_target=kwargs.pop("residual_target", None),
        coverage_target=kwargs.pop("coverage_target", None),
    )
    return RunConfig(batch_size=batch_size, stop=stop, **kwargs)


def fresh_state(x0, seed=0):
    return SolverState(
        x=np.asarray(x0, dtype=float), last_residual=math.nan, k=0, rng=np.random.default_rng(seed)
    )


class TestIterate:
    def test_feasible_start_does_not_move(self):
        family = FiniteUniformFamily(
            [BallDistance([0.0, 0.0], 2.0), Affine([1.0, 0.0], -5.0)]
        )
        state = pfm_iterate(fresh_state([0.1, 0.1]), family, config(batch_size=4))
        assert state.last_residual <= 0.0
        np.testing.assert_array_equal(state.x, [0.1, 0.1])
        assert state.k == 1

    def test_single_constraint_batch_maximum(self):
        family = FiniteUniformFamily([Affine([1.0], 0.0)])
        state = pfm_iterate(fresh_state([2.0]), family, config(batch_size=3))
        assert state.last_residual == pytest.approx(2.0)
        np.testing.assert_allclose(state.x, [0.0])

    def test_argmax_picks_largest_value(self):
        # {x - 1, x - 3} at x0 = 5: values 4 and 2, argmax is x - 1, step to 1.
        family = FiniteUniformFamily([Affine([1.0], -1.0), Affine([1.0], -3.0)])
        state = pfm_iterate(
            fresh_state([5.0]), family, config(batch_size=2, replacement="without")
        )
        assert state.last_residual == pytest.approx(4.0)
        np.testing.assert_allclose(state.x, [1.0])

    def test_infeasible_constraint_surfaces(self):
        # x.x + 1 <= 0 has positive minimum at the origin with zero gradient
        family = FiniteUniformFamily([Quadratic(np.eye(1), [0.0], 1.0)])
        with pytest.raises(InfeasibleConstraintError) as info:
            pfm_iterate(fresh_state([0.0]), family, config())
        assert info.value.iteration == 1


class TestRunPfm:
    def test_ball_reaches_boundary_then_stops(self):
        family = FiniteUniformFamily([BallDistance([0.0, 0.0], 1.0)])
        trace = run_pfm(family, [3.0, 4.0], config(residual_target=0.0, max_iters=10))
        assert trace.stop_reason == "residual_target"
        assert trace.moves == 1
        assert trace.iterations == 2  # the stopping residual is seen one iteration later
        np.testing.assert_allclose(trace.x_final, [0.6, 0.8])
        assert trace.records[-1].residual == pytest.approx(0.0)

    def test_max_iters_zero_forbidden(self):
        with pytest.raises(ValueError):
            StopRule(max_iters=0)

    def test_max_iters_one_gives_one_record(self):
        family = FiniteUniformFamily([Affine([1.0], 0.0)])
        trace = run_pfm(family, [5.0], config(max_iters=1))
        assert trace.iterations == 1
        assert len(trace.records) == 1
        assert trace.stop_reason == "max_iters"

    def test_coverage_stop_certified_by_exact_oracle(self):
        problem = gen_linear(4, 200, 1.0, np.random.default_rng(2), dist=3.0)
        eps = 0.3 * problem.dist_exact
        target = CoverageTarget(eps=eps, gamma=0.1, check_every=1)
        trace = run_pfm(
            problem.family,
            problem.x0,
            config(batch_size=10, max_iters=5000, coverage_target=target),
        )
        assert trace.stop_reason == "coverage_target"
        cov = coverage_exact(problem.family, CoverageQuery(x=trace.x_final, eps=eps))
        assert cov >= 0.9

    def test_feasible_start_with_coverage_target_stops_immediately(self):
        family = FiniteUniformFamily([BallDistance([0.0, 0.0], 1.0)])
        target = CoverageTarget(eps=0.0, gamma=0.5)
        trace = run_pfm(family, [0.0, 0.0], config(coverage_target=target))
        assert trace.iterations == 0
        assert trace.stop_reason == "coverage_target"
        assert trace.records == []

    def test_determinism(self):
        problem = gen_linear(3, 50, 1.0, np.random.default_rng(4))
        cfg = config(batch_size=5, max_iters=60, snapshot_every=1)
        a = run_pfm(problem.family, problem.x0, cfg)
        b = run_pfm(problem.family, problem.x0, cfg)
        assert a.stop_reason == b.stop_reason
        assert [r.residual for r in a.records] == [r.residual for r in b.records]
        assert [r.batch_argmax for r in a.records] == [r.batch_argmax for r in b.records]
        np.testing.assert_array_equal(a.x_final, b.x_final)

    def test_cumulative_samples(self):
        problem = gen_linear(3, 50, 1.0, np.random.default_rng(4))
        trace = run_pfm(problem.family, problem.x0, config(batch_size=7, max_iters=12))
        assert trace.cumulative_samples == 7 * trace.iterations


class TestParametricFamilies:
    def test_solver_runs_on_infinite_sample_space(self):
        from polyakfm import ParametricFamily, UniformBox

        # balls with centers in [-0.2, 0.2]^2 and radii in [1, 1.5]: the
        # origin is feasible for every drawn constraint
        family = ParametricFamily(
            "ball",
            UniformBox([-0.2, -0.2, 1.0], [0.2, 0.2, 1.5]),
            dimension=2,
        )
        trace = run_pfm(
            family, [8.0, -6.0], config(batch_size=4, max_iters=500, residual_target=0.05)
        )
        assert trace.stop_reason == "residual_target"
        assert np.linalg.norm(trace.x_final) < np.linalg.norm([8.0, -6.0])

    def test_parametric_trace_reproducible(self):
        from polyakfm import GaussianParams, ParametricFamily

        family = ParametricFamily(
            "affine", GaussianParams([1.0, 0.0, -1.0], [0.2, 0.2, 0.1]), dimension=2
        )
        cfg = config(batch_size=3, max_iters=40, seed=17)
        a = run_pfm(family, [5.0, 5.0], cfg)
        b = run_pfm(family, [5.0, 5.0], cfg)
        assert [r.residual for r in a.records] == [r.residual for r in b.records]
        np.testing.assert_array_equal(a.x_final, b.x_final)


class TestFejerInvariants:
    def run_with_snapshots(self, seed=0):
        problem = gen_linear(4, 80, 1.0, np.random.default_rng(11), dist=5.0)
        trace = run_pfm(
            problem.family,
            problem.x0,
            config(batch_size=3, max_iters=300, snapshot_every=1, seed=seed),
        )
        points = [problem.x0] + [r.x for r in trace.records]
        return problem, trace, points

    def test_distances_to_feasible_points_nonincreasing(self, rng):
        problem, trace, points = self.run_with_snapshots()
        # the witness plus random points of the feasible interior ball
        radius = problem.generator["interior_radius"]
        directions = rng.normal(size=(5, 4))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        feasible = [problem.feasible_witness] + [
            problem.feasible_witness + 0.9 * radius * rng.random() * d for d in directions
        ]
        for z in feasible:
            assert problem.family.values_at(np.asarray(z)).max() <= 0.0
            dists = [np.linalg.norm(x - z) for x in points]
            for before, after, record in zip(dists, dists[1:], trace.records):
                assert after <= before + 1e-9
                if record.moved:
                    assert after < before + 1e-9

    def test_residual_budget(self):
        problem, trace, _ = self.run_with_snapshots(seed=5)
        lipschitz = problem.family.lipschitz_bound
        for eps in (0.5, 1.0, 2.0):
            count = sum(1 for r in trace.records if r.residual >= eps)
            budget = math.floor((lipschitz * problem.dist_exact / eps) ** 2)
            assert count <= budget


class TestTraceExport:
    def test_csv_layout(self):
        family = FiniteUniformFamily([BallDistance([0.0, 0.0], 1.0)])
        trace = run_pfm(family, [3.0, 4.0], config(residual_target=0.0, max_iters=10))
        lines = trace.csv_text().strip().split("\n")
        assert lines[0] == "k,residual,moved,stop_reason"
        assert len(lines) == 1 + trace.iterations
        body = [line.split(",") for line in lines[1:]]
        assert all(row[3] == "" for row in body[:-1])
        assert body[-1][3] == "residual_target"

    def test_csv_file_roundtrip(self, tmp_path):
        family = FiniteUniformFamily([Affine([1.0], 0.0)])
        trace = run_pfm(family, [5.0], config(max_iters=3))
        path = tmp_path / "trace.csv"
        trace.write_csv(path)
        assert path.read_text() == trace.csv_text()

    def test_config_json_echo(self):
        family = FiniteUniformFamily([Affine([1.0], 0.0)])
        cfg = config(batch_size=2, max_iters=3, seed=9)
        trace = run_pfm(family, [5.0], cfg)
        doc = json.loads(trace.config_json())
        assert doc["config"]["batch_size"] == 2
        assert doc["config"]["seed"] == 9
        assert doc["config"]["step"] == {"delta": 1.0}
        assert doc["stop_reason"] == "max_iters"

    def test_projection_region_confines_iterates(self):
        # restrict the run to a box that still contains the feasible set
        problem = gen_linear(3, 60, 1.0, np.random.default_rng(21), dist=3.0)
        from polyakfm import BoxRegion

        region = BoxRegion(-2.0 * np.ones(3), 4.0 * np.ones(3))
        trace = run_pfm(
            problem.family,
            problem.x0,
            config(
                batch_size=4,
                max_iters=2000,
                residual_target=0.1,
                region=region,
                snapshot_every=1,
            ),
        )
        assert trace.stop_reason == "residual_target"
        for record in trace.records:
            assert np.all(record.x >= region.lo - 1e-12)
            assert np.all(record.x <= region.hi + 1e-12)

    def test_snapshot_policies(self):
        problem = gen_linear(2, 20, 1.0, np.random.default_rng(0))
        none_kept = run_pfm(problem.family, problem.x0, config(batch_size=2, max_iters=10))
        assert all(r.x is None for r in none_kept.records)
        every = run_pfm(
            problem.family, problem.x0, config(batch_size=2, max_iters=10, snapshot_every=1)
        )
        assert all(r.x is not None for r in every.records)
        third = run_pfm(
            problem.family, problem.x0, config(batch_size=2, max_iters=10, snapshot_every=3)
        )
        for record in third.records:
            assert (record.x is not None) == (record.k % 3 == 0)
