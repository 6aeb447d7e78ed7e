"""Shared helpers: random catalog constraints with a known feasible point."""

import numpy as np
import pytest

from polyakfm import Affine, BallDistance, MaxOf, Quadratic

KINDS = ("affine", "ball", "quadratic", "max")


def random_constraint_with_witness(rng, n, kind=None, margin_scale=1.0):
    """A random catalog constraint together with a point z where it is
    satisfied (value(z) <= -margin for some margin >= 0)."""
    kind = kind or KINDS[rng.integers(len(KINDS))]
    z = rng.normal(size=n)
    margin = margin_scale * rng.random()
    if kind == "affine":
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        return Affine(a, -(a @ z) - margin), z
    if kind == "ball":
        center = z + rng.normal(size=n)
        radius = float(np.linalg.norm(z - center)) + margin
        return BallDistance(center, radius), z
    if kind == "quadratic":
        # (x - z)^T A^T A (x - z) - margin, expanded to x.Qx + a.x + b.
        root = rng.normal(size=(n, n)) / np.sqrt(n)
        q = root.T @ root
        a = -2.0 * (q @ z)
        b = float(z @ q @ z) - margin
        return Quadratic(q, a, b), z
    pieces = []
    for _ in range(rng.integers(2, 4)):
        piece, _ = random_constraint_with_witness(
            rng, n, kind=("affine", "ball", "quadratic")[rng.integers(3)], margin_scale=margin_scale
        )
        pieces.append(_shift_to_witness(piece, z, rng))
    return MaxOf(tuple(pieces)), z


def _shift_to_witness(constraint, z, rng):
    """Translate a constraint so that z satisfies it with a margin."""
    value = constraint.value(z)
    margin = rng.random()
    if isinstance(constraint, Affine):
        return Affine(constraint.a, constraint.b - value - margin)
    if isinstance(constraint, BallDistance):
        return BallDistance(constraint.center, constraint.radius + value + margin)
    return Quadratic(constraint.q, constraint.a, constraint.b - value - margin)


def point_with_positive_value(rng, constraint, z, max_tries=200):
    """A point where the constraint's value is strictly positive, found by
    walking outward from the witness."""
    n = z.shape[0]
    scale = 1.0
    for _ in range(max_tries):
        direction = rng.normal(size=n)
        direction /= np.linalg.norm(direction)
        x = z + scale * direction
        if constraint.value(x) > 1e-12:
            return x
        scale *= 1.5
    raise AssertionError("could not find a violating point")


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
