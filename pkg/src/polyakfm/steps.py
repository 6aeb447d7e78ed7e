"""Single Polyak steps, the decrease certificate, and closed-form projections.

The step drives the active constraint's value to zero along a subgradient:
with value h(x) > 0 and g a subgradient at x, the next point is
``x - delta * h(x) / ||g||^2 * g``. With delta = 1 the squared distance to
any point z with h(z) <= 0 shrinks by at least ``(h(x)/||g||)^2``; for
extrapolated steps with 0 < delta < 2 the shrinkage factor is
``delta * (2 - delta)``. ``check_decrease`` verifies that inequality and is
used as a test oracle, never in the solve path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleConstraintError


@dataclass(frozen=True)
class StepParams:
    """Extrapolation factor for the step; 1.0 is the plain Polyak step."""

    delta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta < 2.0:
            raise ValueError(f"delta must lie in (0, 2), got {self.delta}")


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box; projection is a coordinate clamp."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D vectors of equal length")
        if np.any(hi < lo):
            raise ValueError("box needs lo <= hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def to_dict(self):
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class BallRegion:
    """Euclidean ball; projection is radial."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.ndim != 1:
            raise ValueError("ball center must be a 1-D vector")
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


def region_from_dict(d):
    if d is None:
        return None
    kind = d.get("kind")
    if kind == "none":
        return None
    if kind == "box":
        return BoxRegion(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))
    if kind == "ball":
        return BallRegion(np.asarray(d["center"], dtype=float), d["radius"])
    raise ValueError(f"unknown region kind: {kind!r}")


def region_to_dict(region):
    return {"kind": "none"} if region is None else region.to_dict()


def polyak_step(x, value, g, params=StepParams()):
    """One (possibly extrapolated) Polyak step.

    Returns ``x`` unchanged when ``value <= 0``. Raises
    :class:`InfeasibleConstraintError` when ``value > 0`` with ``g = 0``:
    that constraint's minimum is positive, so the feasible set is empty.
    """
    x = np.asarray(x, dtype=float)
    if value <= 0:
        return x
    g = np.asarray(g, dtype=float)
    gg = float(g @ g)
    if gg == 0.0:
        raise InfeasibleConstraintError(value)
    return x - params.delta * (value / gg) * g


def check_decrease(x, x_plus, z, value, g, delta=1.0, slack=1e-9):
    """Whether the step from x to x_plus achieved the guaranteed decrease
    of squared distance to z, a point with nonpositive constraint value.

    Checks ``||x_plus - z||^2 <= ||x - z||^2 - delta*(2-delta)*(value/||g||)^2``
    up to ``slack``. Test oracle only.
    """
    x = np.asarray(x, dtype=float)
    x_plus = np.asarray(x_plus, dtype=float)
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    gn2 = float(g @ g)
    lhs = float((x_plus - z) @ (x_plus - z))
    rhs = float((x - z) @ (x - z)) - delta * (2.0 - delta) * (value * value / gn2)
    return lhs <= rhs + slack


def project(region, x):
    """Nearest point of the region; identity when region is None."""
    x = np.asarray(x, dtype=float)
    if region is None:
        return x
    if isinstance(region, BoxRegion):
        return np.clip(x, region.lo, region.hi)
    if isinstance(region, BallRegion):
        diff = x - region.center
        norm = float(np.linalg.norm(diff))
        if norm <= region.radius:
            return x
        return region.center + (region.radius / norm) * diff
    raise TypeError(f"unsupported region type: {type(region).__name__}")
