"""Coverage oracles: what fraction of constraints a point satisfies to
tolerance eps.

For finite families the coverage ``P{omega : f_omega(x) <= eps}`` is an
exact count; for parametric families it is estimated by Monte Carlo with a
Wilson-score interval. ``residual_quantile`` inverts the exact coverage:
the smallest eps whose coverage reaches ``1 - gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SampleSpaceError

# Two-sided 95% normal quantile, used by the Wilson interval.
_Z95 = 1.959963984540054

_MC_CHUNK = 200_000


@dataclass(frozen=True)
class CoverageQuery:
    """A point, a residual tolerance, and optionally the coverage target."""

    x: np.ndarray
    eps: float
    gamma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "eps", float(self.eps))


@dataclass(frozen=True)
class CoverageEstimate:
    estimate: float
    lower: float
    upper: float
    trials: int


def coverage_exact(family, query):
    """Exact coverage for a finite family: ``#{i : f_i(x) <= eps} / m``."""
    if not family.is_finite:
        raise SampleSpaceError("exact coverage needs a finite family")
    values = family.values_at(query.x)
    return float(np.count_nonzero(values <= query.eps)) / family.size


def wilson_interval(successes, trials, z=_Z95):
    """Two-sided Wilson-score interval for a binomial proportion.

    Stays valid near 0 and 1, where feasibility runs live.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    phat = successes / trials
    z2n = z * z / trials
    center = (phat + z2n / 2.0) / (1.0 + z2n)
    half = (z / (1.0 + z2n)) * np.sqrt(phat * (1.0 - phat) / trials + z2n / (4.0 * trials))
    # At phat in {0, 1} the bound equals phat exactly; keep float rounding
    # from pushing it past the point estimate.
    return min(max(0.0, center - half), phat), max(min(1.0, center + half), phat)


def coverage_mc(family, query, trials, rng):
    """Monte-Carlo coverage estimate with a 95% Wilson interval.

    Draws ``trials`` i.i.d. samples from the family's measure and counts
    the fraction with value at most eps. Reproducible per rng stream.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    hits = 0
    remaining = trials
    while remaining > 0:
        chunk = min(remaining, _MC_CHUNK)
        batch = family.sample_batch(rng, chunk, mode="with")
        values = family.batch_values(batch, query.x)
        hits += int(np.count_nonzero(values <= query.eps))
        remaining -= chunk
    lower, upper = wilson_interval(hits, trials)
    return CoverageEstimate(estimate=hits / trials, lower=lower, upper=upper, trials=trials)


def residual_quantile(family, x, gamma):
    """Smallest residual level whose exact coverage reaches ``1 - gamma``.

    Returns the ``ceil((1-gamma) * m)``-th smallest constraint value at x.
    Ties count inclusively (coverage uses ``<=``), so the returned level
    always satisfies ``coverage_exact(x, level) >= 1 - gamma``.
    """
    if not family.is_finite:
        raise SampleSpaceError("residual quantile needs a finite family")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    values = np.sort(family.values_at(x))
    rank = int(np.ceil((1.0 - gamma) * family.size))
    rank = max(1, min(family.size, rank))
    return float(values[rank - 1])
