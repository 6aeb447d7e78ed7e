import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polyakfm import (
    BallRegion,
    BoxRegion,
    InfeasibleConstraintError,
    StepParams,
    check_decrease,
    polyak_step,
    project,
)
from conftest import point_with_positive_value, random_constraint_with_witness


class TestPolyakStep:
    def test_nonpositive_value_no_move(self):
        x = np.array([1.0, 0.0])
        out = polyak_step(x, -0.5, np.array([3.0, 3.0]))
        np.testing.assert_array_equal(out, x)

    def test_exact_zero_in_1d(self):
        out = polyak_step(np.array([2.0]), 2.0, np.array([1.0]))
        np.testing.assert_allclose(out, [0.0])

    def test_projects_onto_unit_ball_boundary(self):
        # h(x) = ||x|| - 1 at (3, 4): value 4, unit gradient (0.6, 0.8).
        out = polyak_step(np.array([3.0, 4.0]), 4.0, np.array([0.6, 0.8]))
        np.testing.assert_allclose(out, [0.6, 0.8])

    def test_zero_gradient_with_positive_value(self):
        with pytest.raises(InfeasibleConstraintError):
            polyak_step(np.array([0.0]), 1.0, np.array([0.0]))

    def test_delta_range_enforced(self):
        for delta in (0.0, 2.0, -1.0, 2.5):
            with pytest.raises(ValueError):
                StepParams(delta=delta)

    def test_extrapolated_step(self):
        out = polyak_step(np.array([2.0]), 2.0, np.array([1.0]), StepParams(delta=1.5))
        np.testing.assert_allclose(out, [-1.0])


class TestCheckDecrease:
    def test_ball_step_case(self):
        ok = check_decrease([3.0, 4.0], [0.6, 0.8], [0.0, 0.0], 4.0, [0.6, 0.8])
        assert ok  # 1 <= 25 - 16

    def test_equality_case(self):
        assert check_decrease([2.0], [0.0], [0.0], 2.0, [1.0])  # 0 <= 4 - 4

    def test_extrapolated_equality(self):
        # delta = 1.5: x_plus = -1, and 1 <= 4 - 0.75 * 4 = 1 holds with equality.
        assert check_decrease([2.0], [-1.0], [0.0], 2.0, [1.0], delta=1.5)

    def test_detects_violation(self):
        assert not check_decrease([2.0], [1.9], [0.0], 2.0, [1.0])


class TestProject:
    def test_none_is_identity(self):
        x = np.array([7.0, -3.0])
        np.testing.assert_array_equal(project(None, x), x)

    def test_ball_radial(self):
        region = BallRegion([0.0, 0.0], 1.0)
        np.testing.assert_allclose(project(region, np.array([3.0, 4.0])), [0.6, 0.8])

    def test_ball_interior_untouched(self):
        region = BallRegion([0.0, 0.0], 1.0)
        x = np.array([0.1, 0.2])
        np.testing.assert_array_equal(project(region, x), x)

    def test_box_clamp(self):
        region = BoxRegion([0.0, 0.0], [1.0, 1.0])
        np.testing.assert_allclose(project(region, np.array([2.0, -1.0])), [1.0, 0.0])

    @pytest.mark.parametrize(
        "region",
        [BallRegion([0.5, -0.5], 2.0), BoxRegion([-1.0, 0.0], [1.0, 3.0])],
    )
    def test_nonexpansive(self, region, rng):
        for _ in range(300):
            x = 5.0 * rng.normal(size=2)
            y = 5.0 * rng.normal(size=2)
            dist_before = np.linalg.norm(x - y)
            dist_after = np.linalg.norm(project(region, x) - project(region, y))
            assert dist_after <= dist_before + 1e-12


class TestFejerProperty:
    @given(
        seed=st.integers(0, 2**31 - 1),
        n=st.integers(1, 6),
        delta=st.floats(0.05, 1.95),
    )
    @settings(max_examples=200, deadline=None)
    def test_decrease_holds_across_catalog(self, seed, n, delta):
        rng = np.random.default_rng(seed)
        constraint, z = random_constraint_with_witness(rng, n)
        x = point_with_positive_value(rng, constraint, z)
        value = constraint.value(x)
        g = constraint.subgradient(x)
        x_plus = polyak_step(x, value, g, StepParams(delta=delta))
        assert check_decrease(x, x_plus, z, value, g, delta=delta)

    @given(seed=st.integers(0, 2**31 - 1))
    @settings(max_examples=100, deadline=None)
    def test_no_move_is_exact(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=3)
        out = polyak_step(x, -rng.random(), rng.normal(size=3))
        assert out is x
