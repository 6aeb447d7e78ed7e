"""Families of convex constraints with value and subgradient oracles.

A family bundles a sample space of convex functions with the probability
measure used to draw them. Two flavors exist:

* :class:`FiniteUniformFamily` -- finitely many constraints, each with
  probability ``1/m``.
* :class:`ParametricFamily` -- a constraint template whose coefficients are
  drawn from a declared distribution, modelling an infinite sample space.

Convexity is guaranteed by construction: descriptors come from a closed
catalog (affine, norm-distance, positive-semidefinite quadratic, and finite
pointwise maxima of these) rather than arbitrary callables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, SampleSpaceError

_PSD_TOL = 1e-9


def _vector(value, dimension=None, name="x"):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if dimension is not None and arr.shape[0] != dimension:
        raise DimensionMismatchError(
            f"{name} has dimension {arr.shape[0]}, expected {dimension}"
        )
    return arr


# ---------------------------------------------------------------------------
# Constraint descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Affine:
    """f(x) = a.x + b"""

    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _vector(self.a, name="a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dimension(self):
        return self.a.shape[0]

    def value(self, x):
        return float(self.a @ _vector(x, self.dimension) + self.b)

    def subgradient(self, x):
        _vector(x, self.dimension)
        return self.a

    def to_dict(self):
        return {"kind": "affine", "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True)
class BallDistance:
    """f(x) = ||x - center|| - radius"""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vector(self.center, name="center"))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self):
        return self.center.shape[0]

    def value(self, x):
        x = _vector(x, self.dimension)
        return float(np.linalg.norm(x - self.center) - self.radius)

    def subgradient(self, x):
        # Deterministic selection: the zero vector at the center, where the
        # norm is not differentiable (0 is a valid subgradient there).
        x = _vector(x, self.dimension)
        diff = x - self.center
        norm = np.linalg.norm(diff)
        if norm == 0.0:
            return np.zeros(self.dimension)
        return diff / norm

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class Quadratic:
    """f(x) = x.Qx + a.x + b with Q positive semidefinite.

    Q is symmetrized on construction; convexity is rejected, not assumed.
    """

    q: np.ndarray
    a: np.ndarray
    b: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise DimensionMismatchError(f"q must be square, got shape {q.shape}")
        q = (q + q.T) / 2.0
        eigmin = float(np.linalg.eigvalsh(q)[0])
        if eigmin < -_PSD_TOL:
            raise ValueError(f"quadratic coefficient matrix is not PSD (min eigenvalue {eigmin:g})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "a", _vector(self.a, q.shape[0], name="a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dimension(self):
        return self.q.shape[0]

    def value(self, x):
        x = _vector(x, self.dimension)
        return float(x @ self.q @ x + self.a @ x + self.b)

    def subgradient(self, x):
        x = _vector(x, self.dimension)
        return 2.0 * (self.q @ x) + self.a

    def to_dict(self):
        return {"kind": "quadratic", "q": self.q.tolist(), "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True)
class MaxOf:
    """Pointwise maximum of catalog constraints."""

    pieces: tuple

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("max constraint needs at least one piece")
        dims = {p.dimension for p in pieces}
        if len(dims) != 1:
            raise DimensionMismatchError(f"max pieces disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "pieces", pieces)

    @property
    def dimension(self):
        return self.pieces[0].dimension

    def value(self, x):
        return max(p.value(x) for p in self.pieces)

    def subgradient(self, x):
        # Lowest-index achieving piece, for a deterministic selection.
        values = [p.value(x) for p in self.pieces]
        best = values.index(max(values))
        return self.pieces[best].subgradient(x)

    def to_dict(self):
        return {"kind": "max", "pieces": [p.to_dict() for p in self.pieces]}


def constraint_from_dict(d):
    kind = d.get("kind")
    if kind == "affine":
        return Affine(np.asarray(d["a"], dtype=float), d["b"])
    if kind == "ball":
        return BallDistance(np.asarray(d["center"], dtype=float), d["radius"])
    if kind == "quadratic":
        return Quadratic(np.asarray(d["q"], dtype=float), np.asarray(d["a"], dtype=float), d["b"])
    if kind == "max":
        return MaxOf(tuple(constraint_from_dict(p) for p in d["pieces"]))
    raise ValueError(f"unknown constraint kind: {kind!r}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WorkingBall:
    """Region on which a declared Lipschitz bound is claimed to hold."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vector(self.center, name="center"))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ValueError("working ball radius must be positive")

    def sample(self, rng, size=None):
        """Uniform points in the ball (by radial rescaling of a Gaussian)."""
        n = self.center.shape[0]
        count = 1 if size is None else size
        direction = rng.standard_normal((count, n))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * rng.random(count) ** (1.0 / n)
        points = self.center + direction * radii[:, None]
        return points[0] if size is None else points

    def to_dict(self):
        return {"center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class SampleBatch:
    """Samples drawn for one iteration.

    ``samples`` is an integer array of indices for finite families and a
    2-D parameter array for parametric ones.
    """

    samples: np.ndarray
    mode: str

    def __len__(self):
        return self.samples.shape[0]

    def __getitem__(self, i):
        return self.samples[i]


def _check_batch_args(size, mode):
    if size < 1:
        raise ValueError(f"batch size must be >= 1, got {size}")
    if mode not in ("with", "without"):
        raise ValueError(f"replacement mode must be 'with' or 'without', got {mode!r}")


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------

_AFFINE, _BALL, _QUAD, _OTHER = 0, 1, 2, 3


class FiniteUniformFamily:
    """Finitely many catalog constraints under the uniform measure.

    Evaluation over many constraints at once is vectorized per descriptor
    kind, which is what makes exact coverage checks affordable inside
    solver loops.
    """

    is_finite = True

    def __init__(self, constraints, lipschitz_bound=None, working_ball=None):
        constraints = tuple(constraints)
        if not constraints:
            raise ValueError("family needs at least one constraint")
        dims = {c.dimension for c in constraints}
        if len(dims) != 1:
            raise DimensionMismatchError(f"constraints disagree on dimension: {sorted(dims)}")
        self.constraints = constraints
        self.dimension = constraints[0].dimension
        self.lipschitz_bound = None if lipschitz_bound is None else float(lipschitz_bound)
        self.working_ball = working_ball
        self._build_blocks()

    @property
    def size(self):
        return len(self.constraints)

    def _build_blocks(self):
        m = self.size
        self._kind = np.empty(m, dtype=np.int8)
        self._local = np.empty(m, dtype=np.int64)
        aff_a, aff_b = [], []
        ball_c, ball_r = [], []
        quad_q, quad_a, quad_b = [], [], []
        other = []
        for i, c in enumerate(self.constraints):
            if isinstance(c, Affine):
                self._kind[i], self._local[i] = _AFFINE, len(aff_a)
                aff_a.append(c.a)
                aff_b.append(c.b)
            elif isinstance(c, BallDistance):
                self._kind[i], self._local[i] = _BALL, len(ball_c)
                ball_c.append(c.center)
                ball_r.append(c.radius)
            elif isinstance(c, Quadratic):
                self._kind[i], self._local[i] = _QUAD, len(quad_q)
                quad_q.append(c.q)
                quad_a.append(c.a)
                quad_b.append(c.b)
            else:
                self._kind[i], self._local[i] = _OTHER, len(other)
                other.append(c)
        self._aff_a = np.asarray(aff_a) if aff_a else None
        self._aff_b = np.asarray(aff_b) if aff_b else None
        self._ball_c = np.asarray(ball_c) if ball_c else None
        self._ball_r = np.asarray(ball_r) if ball_r else None
        self._quad_q = np.asarray(quad_q) if quad_q else None
        self._quad_a = np.asarray(quad_a) if quad_a else None
        self._quad_b = np.asarray(quad_b) if quad_b else None
        self._other = other

    def _check_omega(self, omega):
        idx = int(omega)
        if idx != omega or not 0 <= idx < self.size:
            raise SampleSpaceError(f"sample index {omega!r} outside [0, {self.size})")
        return idx

    def evaluate(self, omega, x):
        return self.constraints[self._check_omega(omega)].value(x)

    def subgradient(self, omega, x):
        return self.constraints[self._check_omega(omega)].subgradient(x)

    def values_at(self, x, indices=None):
        """Constraint values at ``x``, for all constraints or a subset.

        Results are independent of internal evaluation order.
        """
        x = _vector(x, self.dimension)
        if indices is None:
            out = np.empty(self.size)
            if self._aff_a is not None:
                out[self._kind == _AFFINE] = self._aff_a @ x + self._aff_b
            if self._ball_c is not None:
                out[self._kind == _BALL] = (
                    np.linalg.norm(x - self._ball_c, axis=1) - self._ball_r
                )
            if self._quad_q is not None:
                out[self._kind == _QUAD] = (
                    np.einsum("kij,i,j->k", self._quad_q, x, x) + self._quad_a @ x + self._quad_b
                )
            if self._other:
                for i in np.flatnonzero(self._kind == _OTHER):
                    out[i] = self.constraints[i].value(x)
            return out
        idx = np.asarray(indices, dtype=np.int64)
        out = np.empty(idx.shape[0])
        kinds = self._kind[idx]
        local = self._local[idx]
        sel = kinds == _AFFINE
        if sel.any():
            rows = local[sel]
            out[sel] = self._aff_a[rows] @ x + self._aff_b[rows]
        sel = kinds == _BALL
        if sel.any():
            rows = local[sel]
            out[sel] = np.linalg.norm(x - self._ball_c[rows], axis=1) - self._ball_r[rows]
        sel = kinds == _QUAD
        if sel.any():
            rows = local[sel]
            out[sel] = (
                np.einsum("kij,i,j->k", self._quad_q[rows], x, x)
                + self._quad_a[rows] @ x
                + self._quad_b[rows]
            )
        sel = kinds == _OTHER
        if sel.any():
            for pos in np.flatnonzero(sel):
                out[pos] = self._other[local[pos]].value(x)
        return out

    def jacobian_at(self, x):
        """Stacked subgradient selections of all constraints at ``x``,
        shape (m, n). Matches :meth:`subgradient` row by row."""
        x = _vector(x, self.dimension)
        out = np.empty((self.size, self.dimension))
        if self._aff_a is not None:
            out[self._kind == _AFFINE] = self._aff_a
        if self._ball_c is not None:
            sel = self._kind == _BALL
            diff = x - self._ball_c
            norms = np.linalg.norm(diff, axis=1)
            safe = np.where(norms == 0.0, 1.0, norms)
            rows = diff / safe[:, None]
            rows[norms == 0.0] = 0.0
            out[sel] = rows
        if self._quad_q is not None:
            out[self._kind == _QUAD] = (
                2.0 * np.einsum("kij,j->ki", self._quad_q, x) + self._quad_a
            )
        if self._other:
            for i in np.flatnonzero(self._kind == _OTHER):
                out[i] = self.constraints[i].subgradient(x)
        return out

    def sample_batch(self, rng, size, mode="with"):
        _check_batch_args(size, mode)
        if mode == "with":
            samples = rng.integers(0, self.size, size=size)
        else:
            if size > self.size:
                raise SampleSpaceError(
                    f"cannot draw {size} samples without replacement from {self.size} constraints"
                )
            samples = rng.choice(self.size, size=size, replace=False)
        return SampleBatch(samples=samples, mode=mode)

    def batch_values(self, batch, x):
        return self.values_at(x, indices=batch.samples)

    def to_dict(self):
        d = {
            "dimension": self.dimension,
            "type": "finite",
            "constraints": [c.to_dict() for c in self.constraints],
        }
        if self.lipschitz_bound is not None:
            d["lipschitz_bound"] = self.lipschitz_bound
        if self.working_ball is not None:
            d["working_ball"] = self.working_ball.to_dict()
        return d


# ---------------------------------------------------------------------------
# Parametric (infinite sample space) families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBox:
    """Coefficients drawn independently from per-coordinate intervals."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _vector(self.lo, name="lo")
        hi = _vector(self.hi, lo.shape[0], name="hi")
        if np.any(hi < lo):
            raise ValueError("uniform box needs lo <= hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dimension(self):
        return self.lo.shape[0]

    def draw(self, rng, size):
        return self.lo + (self.hi - self.lo) * rng.random((size, self.dimension))

    def to_dict(self):
        return {"kind": "uniform_box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class GaussianParams:
    """Coefficients drawn independently from per-coordinate normals."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _vector(self.mean, name="mean")
        std = _vector(self.std, mean.shape[0], name="std")
        if np.any(std < 0):
            raise ValueError("gaussian std must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dimension(self):
        return self.mean.shape[0]

    def draw(self, rng, size):
        return self.mean + self.std * rng.standard_normal((size, self.dimension))

    def to_dict(self):
        return {"kind": "gaussian", "mean": self.mean.tolist(), "std": self.std.tolist()}


def _distribution_from_dict(d):
    kind = d.get("kind")
    if kind == "uniform_box":
        return UniformBox(np.asarray(d["lo"], dtype=float), np.asarray(d["hi"], dtype=float))
    if kind == "gaussian":
        return GaussianParams(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))
    raise ValueError(f"unknown distribution kind: {kind!r}")


class ParametricFamily:
    """Constraint template with coefficients drawn from a distribution.

    Templates:

    * ``"affine"``  -- a sample is ``(a_1..a_n, b)``, giving f(x) = a.x + b.
    * ``"ball"``    -- a sample is ``(c_1..c_n, r)``, giving f(x) = ||x-c|| - r.

    Both are convex for every parameter value, so convexity again holds by
    construction. Samples are the parameter vectors themselves.
    """

    is_finite = False
    templates = ("affine", "ball")

    def __init__(self, template, distribution, dimension, lipschitz_bound=None, working_ball=None):
        if template not in self.templates:
            raise ValueError(f"template must be one of {self.templates}, got {template!r}")
        dimension = int(dimension)
        if dimension < 1:
            raise ValueError("dimension must be positive")
        if distribution.dimension != dimension + 1:
            raise DimensionMismatchError(
                f"{template} template in dimension {dimension} needs {dimension + 1} "
                f"parameters, distribution provides {distribution.dimension}"
            )
        self.template = template
        self.distribution = distribution
        self.dimension = dimension
        self.lipschitz_bound = None if lipschitz_bound is None else float(lipschitz_bound)
        self.working_ball = working_ball

    def _check_omega(self, omega):
        return _vector(omega, self.dimension + 1, name="omega")

    def constraint_for(self, omega):
        params = self._check_omega(omega)
        if self.template == "affine":
            return Affine(params[:-1], params[-1])
        return BallDistance(params[:-1], params[-1])

    def evaluate(self, omega, x):
        return self.constraint_for(omega).value(x)

    def subgradient(self, omega, x):
        return self.constraint_for(omega).subgradient(x)

    def sample_batch(self, rng, size, mode="with"):
        _check_batch_args(size, mode)
        if mode == "without":
            raise SampleSpaceError("without-replacement sampling needs a finite family")
        return SampleBatch(samples=self.distribution.draw(rng, size), mode=mode)

    def batch_values(self, batch, x):
        x = _vector(x, self.dimension)
        params = batch.samples
        if self.template == "affine":
            return params[:, :-1] @ x + params[:, -1]
        return np.linalg.norm(x - params[:, :-1], axis=1) - params[:, -1]

    def to_dict(self):
        d = {
            "dimension": self.dimension,
            "type": "parametric",
            "template": self.template,
            "distribution": self.distribution.to_dict(),
        }
        if self.lipschitz_bound is not None:
            d["lipschitz_bound"] = self.lipschitz_bound
        if self.working_ball is not None:
            d["working_ball"] = self.working_ball.to_dict()
        return d


# ---------------------------------------------------------------------------
# Problem file format
# ---------------------------------------------------------------------------


def family_from_dict(d):
    """Build a family from the problem-file dict layout (see README)."""
    kind = d.get("type")
    ball = d.get("working_ball")
    working_ball = (
        WorkingBall(np.asarray(ball["center"], dtype=float), ball["radius"]) if ball else None
    )
    lipschitz = d.get("lipschitz_bound")
    if kind == "finite":
        constraints = [constraint_from_dict(c) for c in d["constraints"]]
        family = FiniteUniformFamily(constraints, lipschitz_bound=lipschitz, working_ball=working_ball)
    elif kind == "parametric":
        family = ParametricFamily(
            d["template"],
            _distribution_from_dict(d["distribution"]),
            d["dimension"],
            lipschitz_bound=lipschitz,
            working_ball=working_ball,
        )
    else:
        raise ValueError(f"unknown family type: {kind!r}")
    if family.dimension != d["dimension"]:
        raise DimensionMismatchError(
            f"declared dimension {d['dimension']} does not match constraints ({family.dimension})"
        )
    return family


def save_family(family, path, metadata=None):
    doc = family.to_dict()
    if metadata is not None:
        doc["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_family(path):
    """Returns ``(family, metadata_dict_or_None)``."""
    with open(path) as fh:
        doc = json.load(fh)
    return family_from_dict(doc), doc.get("metadata")
