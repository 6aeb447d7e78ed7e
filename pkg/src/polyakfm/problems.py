"""Generators for constraint families with ground-truth metadata.

Every generated problem carries a feasible witness, a distance upper bound
``||x0 - witness||``, and -- where the construction allows it -- the exact
starting distance to the feasible set and a growth profile that holds by
construction. Exactness comes from making the feasible set (or at least
the nearest piece of its boundary) closed-form:

* linear systems place the start along the normal of the halfspace with
  the smallest feasibility margin, whose projection point is feasible for
  every other halfspace, so the distance to that halfspace is the distance
  to the whole intersection;
* quadratic systems keep a "tight" mass of identical ball constraints
  whose ball is contained in all the others, so the feasible set is that
  ball exactly and a known fraction of constraints grows quadratically
  with the distance to it.

``estimate_growth`` is the brute-force counterpart: it samples exterior
points and grids over candidate profiles. It can only refute or suggest a
profile, never prove one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .bounds import GrowthProfile
from .constraints import (
    Affine,
    FiniteUniformFamily,
    Quadratic,
    WorkingBall,
    family_from_dict,
)
from .errors import SampleSpaceError


@dataclass
class GeneratedProblem:
    family: FiniteUniformFamily
    x0: np.ndarray
    feasible_witness: np.ndarray
    dist_upper: float
    dist_exact: float | None = None
    growth: GrowthProfile | None = None
    feasible_geometry: dict | None = None
    generator: dict | None = None

    def metadata(self):
        meta = {
            "x0": self.x0.tolist(),
            "feasible_witness": self.feasible_witness.tolist(),
            "dist_upper": self.dist_upper,
        }
        if self.dist_exact is not None:
            meta["dist_exact"] = self.dist_exact
        if self.growth is not None:
            meta["growth"] = self.growth.to_dict()
        if self.feasible_geometry is not None:
            meta["feasible_geometry"] = self.feasible_geometry
        if self.generator is not None:
            meta["generator"] = self.generator
        return meta


def save_problem(problem, path):
    doc = problem.family.to_dict()
    doc["metadata"] = problem.metadata()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def problem_from_dict(doc):
    family = family_from_dict(doc)
    meta = doc.get("metadata") or {}
    growth = meta.get("growth")
    return GeneratedProblem(
        family=family,
        x0=np.asarray(meta["x0"], dtype=float),
        feasible_witness=np.asarray(meta["feasible_witness"], dtype=float),
        dist_upper=float(meta["dist_upper"]),
        dist_exact=None if meta.get("dist_exact") is None else float(meta["dist_exact"]),
        growth=None if growth is None else GrowthProfile.from_dict(growth),
        feasible_geometry=meta.get("feasible_geometry"),
        generator=meta.get("generator"),
    )


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def _unit_rows(rng, count, n):
    rows = rng.standard_normal((count, n))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def gen_linear(n, m, sharpness_knob=1.0, rng=None, *, dist=4.0, interior_radius=0.5):
    """Random affine system with a feasible interior ball and exact
    starting distance.

    Constraints are ``a_i . x - s_i <= 0`` with unit normals, so the
    Lipschitz bound is exactly 1. Margins s_i >= interior_radius keep the
    ball of that radius around the origin strictly feasible. The knob in
    (0, 1] controls margin spread: 1 puts every margin at interior_radius
    (every constraint tight at the same depth, the sharpest regime), while
    smaller values slacken a random portion of the constraints.

    The start lies along the first constraint's normal; that constraint
    has the minimal margin, so projecting the start onto its halfspace
    lands inside every other halfspace and the distance to the feasible
    set equals ``dist`` exactly.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n, m = int(n), int(m)
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if not 0.0 < sharpness_knob <= 1.0:
        raise ValueError(f"sharpness_knob must lie in (0, 1], got {sharpness_knob}")
    if interior_radius <= 0:
        raise ValueError(f"interior_radius must be positive, got {interior_radius}")
    if dist <= 0:
        raise ValueError(f"dist must be positive, got {dist}")
    normals = _unit_rows(rng, m, n)
    margins = interior_radius * (1.0 + 3.0 * (1.0 - sharpness_knob) * rng.random(m))
    margins[0] = interior_radius
    constraints = [Affine(normals[i], -margins[i]) for i in range(m)]
    x0 = (margins[0] + dist) * normals[0]
    witness = np.zeros(n)
    family = FiniteUniformFamily(
        constraints,
        lipschitz_bound=1.0,
        working_ball=WorkingBall(witness, float(np.linalg.norm(x0))),
    )
    return GeneratedProblem(
        family=family,
        x0=x0,
        feasible_witness=witness,
        dist_upper=float(np.linalg.norm(x0)),
        dist_exact=float(dist),
        growth=None,
        feasible_geometry={"kind": "polyhedron"},
        generator={
            "kind": "linear",
            "n": n,
            "m": m,
            "sharpness_knob": sharpness_knob,
            "dist": dist,
            "interior_radius": interior_radius,
        },
    )


def gen_quadratic(
    n,
    m,
    rng=None,
    *,
    tight_fraction=0.5,
    dist=4.0,
    interior_radius=1.0,
    center_spread=0.5,
    radius_jitter=0.5,
):
    """Random squared-ball system whose feasible set is a known ball.

    A ``tight_fraction`` share of the constraints is the identical tight
    ball ``||x||^2 - R^2 <= 0``; the rest are random balls built to contain
    it (radius at least ``||center|| + R``). The feasible set is therefore
    the tight ball exactly, the starting distance is closed-form, and the
    tight mass gives a growth profile that holds everywhere: at distance t
    the tight constraints evaluate to ``t^2 + 2 R t >= t^2``, i.e. degree-2
    growth with mu = 1 and mass ``tight_fraction``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n, m = int(n), int(m)
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    if interior_radius <= 0 or dist <= 0:
        raise ValueError("interior_radius and dist must be positive")
    if not 0.0 < tight_fraction <= 1.0:
        raise ValueError(f"tight_fraction must lie in (0, 1], got {tight_fraction}")
    radius = float(interior_radius)
    n_tight = max(1, int(round(tight_fraction * m)))
    eye = np.eye(n)
    constraints = [Quadratic(eye, np.zeros(n), -radius * radius) for _ in range(n_tight)]
    max_center = 0.0
    for _ in range(m - n_tight):
        center = _unit_rows(rng, 1, n)[0] * (center_spread * radius * rng.random())
        r = float(np.linalg.norm(center)) + radius + radius_jitter * radius * rng.random()
        max_center = max(max_center, float(np.linalg.norm(center)))
        constraints.append(Quadratic(eye, -2.0 * center, float(center @ center) - r * r))
    x0 = _unit_rows(rng, 1, n)[0] * (radius + dist)
    witness = np.zeros(n)
    working_radius = float(np.linalg.norm(x0))
    # Gradient of ||x - c||^2 - r^2 is 2(x - c); on the working ball its norm
    # is at most 2 (working_radius + ||c||).
    lipschitz = 2.0 * (working_radius + max_center)
    family = FiniteUniformFamily(
        constraints,
        lipschitz_bound=lipschitz,
        working_ball=WorkingBall(witness, working_radius),
    )
    return GeneratedProblem(
        family=family,
        x0=x0,
        feasible_witness=witness,
        dist_upper=working_radius,
        dist_exact=float(dist),
        growth=GrowthProfile(mu=1.0, degree=2.0, delta_mass=n_tight / m),
        feasible_geometry={"kind": "ball", "center": witness.tolist(), "radius": radius},
        generator={
            "kind": "quadratic",
            "n": n,
            "m": m,
            "tight_fraction": tight_fraction,
            "dist": dist,
            "interior_radius": interior_radius,
            "center_spread": center_spread,
            "radius_jitter": radius_jitter,
        },
    )


def interval_problem(x0=5.0, half_width=1.0):
    """The 1-D system {x - w <= 0, -x - w <= 0} with feasible set [-w, w].

    Small enough to enumerate by hand; sharp with mu = 1, degree 1 and
    mass 1/2 (exactly one of the two residuals equals the distance at any
    exterior point).
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    constraints = [Affine(np.array([1.0]), -half_width), Affine(np.array([-1.0]), -half_width)]
    start = np.array([float(x0)])
    witness = np.zeros(1)
    dist_exact = max(0.0, abs(float(x0)) - half_width)
    family = FiniteUniformFamily(
        constraints,
        lipschitz_bound=1.0,
        working_ball=WorkingBall(witness, max(abs(float(x0)), half_width)),
    )
    return GeneratedProblem(
        family=family,
        x0=start,
        feasible_witness=witness,
        dist_upper=abs(float(x0)),
        dist_exact=dist_exact,
        growth=GrowthProfile(mu=1.0, degree=1.0, delta_mass=0.5),
        feasible_geometry={"kind": "box", "lo": [-half_width], "hi": [half_width]},
        generator={"kind": "interval", "x0": float(x0), "half_width": half_width},
    )


# ---------------------------------------------------------------------------
# Distance oracles
# ---------------------------------------------------------------------------


def projection_distance_qp(family, x, start=None, tol=1e-12):
    """Distance from x to the family's feasible set by direct minimization:
    min ||y - x||^2 subject to every constraint value <= 0.

    Brute-force oracle for tests and the growth estimator; assumes the
    feasible set is nonempty (pass a feasible ``start`` when known).
    """
    x = np.asarray(x, dtype=float)

    def objective(y):
        diff = y - x
        return 0.5 * float(diff @ diff), diff

    cons = [
        {
            "type": "ineq",
            "fun": lambda y: -family.values_at(y),
            "jac": lambda y: -family.jacobian_at(y),
        }
    ]
    y0 = x.copy() if start is None else np.asarray(start, dtype=float).copy()
    result = minimize(
        objective,
        y0,
        jac=True,
        method="SLSQP",
        constraints=cons,
        options={"maxiter": 500, "ftol": tol},
    )
    y = result.x
    worst = float(np.max(family.values_at(y)))
    if worst > 1e-6:
        raise RuntimeError(f"projection solve left the feasible set (max value {worst:g})")
    return float(np.linalg.norm(y - x))


def feasible_distance(problem, x):
    """Distance from x to the problem's feasible set.

    Closed form when the generator recorded the feasible geometry (ball or
    box); otherwise solved numerically via :func:`projection_distance_qp`
    started from the feasible witness.
    """
    x = np.asarray(x, dtype=float)
    geom = problem.feasible_geometry or {}
    kind = geom.get("kind")
    if kind == "ball":
        center = np.asarray(geom["center"], dtype=float)
        return max(0.0, float(np.linalg.norm(x - center)) - float(geom["radius"]))
    if kind == "box":
        lo = np.asarray(geom["lo"], dtype=float)
        hi = np.asarray(geom["hi"], dtype=float)
        return float(np.linalg.norm(x - np.clip(x, lo, hi)))
    return projection_distance_qp(problem.family, x, start=problem.feasible_witness)


# ---------------------------------------------------------------------------
# Growth estimation
# ---------------------------------------------------------------------------

_DEFAULT_MU_GRID = 2.0 ** np.arange(-8, 7)


@dataclass(frozen=True)
class GrowthEstimate:
    """Brute-force profile suggestions, one per candidate degree.

    ``profiles[d]`` is the candidate with the largest ``mu * mass``
    product whose inequality held at every sampled exterior point, or
    None when no grid candidate held anywhere. Finite sampling means this
    can refute or suggest a profile, not certify one.
    """

    profiles: dict
    samples: int
    dist_range: tuple

    def for_degree(self, degree):
        return self.profiles[float(degree)]


def estimate_growth(problem, grid_size, rng=None, degrees=(1.0, 2.0), mu_grid=None):
    """Sample exterior points and grid over (mu, degree) candidates.

    For each candidate the reported mass is the worst-case (over sampled
    points) fraction of constraints with value at least ``mu * dist^d``.
    """
    grid_size = int(grid_size)
    if grid_size < 1:
        raise ValueError(f"grid_size must be >= 1, got {grid_size}")
    if not problem.family.is_finite:
        raise SampleSpaceError("growth estimation needs a finite family")
    if rng is None:
        rng = np.random.default_rng(0)
    mu_grid = _DEFAULT_MU_GRID if mu_grid is None else np.asarray(mu_grid, dtype=float)

    center = problem.feasible_witness
    radius = max(problem.dist_upper, float(np.linalg.norm(problem.x0 - center)))
    if radius <= 0.0:
        raise ValueError(
            "no exterior points found in the working ball; the start appears to "
            "lie inside the feasible set"
        )
    ball = WorkingBall(center, radius)
    scale = max(radius, 1.0)

    points, dists = [], []
    attempts = 0
    while len(points) < grid_size and attempts < 200 * grid_size:
        attempts += 1
        x = ball.sample(rng)
        t = feasible_distance(problem, x)
        if t > 1e-9 * scale:
            points.append(x)
            dists.append(t)
    if not points:
        raise ValueError(
            "no exterior points found in the working ball; the start appears to "
            "lie inside the feasible set"
        )
    dists = np.asarray(dists)
    values = np.stack([problem.family.values_at(x) for x in points])

    profiles = {}
    for degree in degrees:
        degree = float(degree)
        powered = dists**degree
        best = None
        for mu in mu_grid:
            # Worst-case over sampled points of the qualifying fraction.
            mass = float(np.min(np.mean(values >= mu * powered[:, None], axis=1)))
            if mass > 0.0 and (best is None or mu * mass > best[0]):
                best = (mu * mass, float(mu), mass)
        profiles[degree] = (
            None if best is None else GrowthProfile(mu=best[1], degree=degree, delta_mass=best[2])
        )
    return GrowthEstimate(
        profiles=profiles,
        samples=len(points),
        dist_range=(float(dists.min()), float(dists.max())),
    )
