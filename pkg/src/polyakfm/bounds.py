"""Closed-form iteration-bound calculators and the hitting-time simulator.

The minibatch solver makes progress whenever the drawn batch contains a
constraint whose value at the iterate exceeds the target residual; under a
coverage deficit of gamma, a batch of size L does so with probability
``p = 1 - (1-gamma)^L``. Iteration counts are then bounded through the
hitting time of a Bernoulli(p) counting process, which the simulator here
reproduces empirically as an independent check on the calculators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def success_probability(gamma, batch_size):
    """p = 1 - (1 - gamma)^L, the chance a batch of size L contains at
    least one constraint from a set of measure >= gamma."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    batch_size = int(batch_size)
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    return -math.expm1(batch_size * math.log1p(-gamma))


@dataclass(frozen=True)
class GrowthProfile:
    """Lower-bound profile: a delta_mass fraction of constraints satisfies
    ``f(x) >= mu * dist(x, feasible_set)^degree`` at every exterior x of
    the region it is declared on."""

    mu: float
    degree: float
    delta_mass: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        if not 0.0 < self.delta_mass <= 1.0:
            raise ValueError(f"delta_mass must lie in (0, 1], got {self.delta_mass}")

    def to_dict(self):
        return {"mu": self.mu, "degree": self.degree, "delta_mass": self.delta_mass}

    @classmethod
    def from_dict(cls, d):
        return cls(mu=d["mu"], degree=d["degree"], delta_mass=d["delta_mass"])


@dataclass(frozen=True)
class BoundInputs:
    """Everything the calculators need.

    ``lipschitz`` bounds subgradient norms on the working ball, ``dist0``
    is the starting distance to the feasible set (or a declared upper
    bound), ``eps`` the target residual, ``gamma`` the tolerated coverage
    deficit, ``batch_size`` the minibatch size.
    """

    lipschitz: float
    dist0: float
    eps: float
    gamma: float
    batch_size: int

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ValueError(f"lipschitz bound must be positive, got {self.lipschitz}")
        if self.dist0 <= 0:
            raise ValueError(f"dist0 must be positive, got {self.dist0}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.eps < self.lipschitz * self.dist0:
            raise ValueError(
                f"eps must lie in (0, lipschitz * dist0) = (0, {self.lipschitz * self.dist0:g}); "
                f"got {self.eps}. With eps >= lipschitz * dist0 the starting point already "
                "achieves the coverage goal and no iterations are needed."
            )

    @property
    def p(self):
        return success_probability(self.gamma, self.batch_size)

    @property
    def scale(self):
        """(lipschitz * dist0 / eps), the budget scale shared by all bounds."""
        return self.lipschitz * self.dist0 / self.eps

    @property
    def deterministic_budget(self):
        """Max number of iterations whose residual can reach eps before the
        distance to the feasible set is exhausted: floor(scale^2)."""
        return int(math.floor(self.scale**2))


def expected_iterations(inputs):
    """Expected iterations to reach coverage ``1 - gamma`` at residual eps:
    ``(1/p) * (lipschitz * dist0 / eps)^2``."""
    return inputs.scale**2 / inputs.p


def concentration_tail(inputs, k):
    """Upper bound on the probability that iteration k is the *first* to
    reach the coverage goal, valid for ``k >= 2 * expected_iterations``:
    ``0.5 * (1 / (1 + p / (2 (1-p))))^(k - ceil(2E))``."""
    expectation = expected_iterations(inputs)
    if k < 2.0 * expectation:
        raise ValueError(
            f"tail bound needs k >= 2 * expected iterations = {2.0 * expectation:g}, got {k}"
        )
    p = inputs.p
    if p == 1.0:
        ratio = 0.0
    else:
        ratio = 1.0 / (1.0 + 0.5 * p / (1.0 - p))
    exponent = k - math.ceil(2.0 * expectation)
    return 0.5 * ratio**exponent


def _growth_factor(inputs, growth):
    """(lipschitz / (mu^(1/d) eps^(1-1/d)))^2 * min{1/(4^(1-1/d)-1), log2(scale)}.

    For degree 1 the constant branch is +inf, so the logarithmic branch
    always wins there.
    """
    d = growth.degree
    inv_d = 1.0 / d
    denom = 4.0 ** (1.0 - inv_d) - 1.0
    const_branch = math.inf if denom <= 0.0 else 1.0 / denom
    log_branch = math.log2(inputs.scale)
    ratio = inputs.lipschitz / (growth.mu**inv_d * inputs.eps ** (1.0 - inv_d))
    return ratio**2 * min(const_branch, log_branch)


def expected_iterations_growth(inputs, growth):
    """Expected-iteration bound under a growth profile with gamma < delta_mass:
    ``(4/p) * (1 + growth_factor)``."""
    if inputs.gamma >= growth.delta_mass:
        raise ValueError(
            f"growth bound needs gamma < delta_mass, got gamma={inputs.gamma} "
            f">= delta_mass={growth.delta_mass}"
        )
    return (4.0 / inputs.p) * (1.0 + _growth_factor(inputs, growth))


@dataclass(frozen=True)
class ConfidentBounds:
    """Deterministic iteration bounds for the confidence-scheduled solver."""

    basic: int
    growth: float | None


def confident_iteration_bounds(inputs, growth=None):
    """Iterations within which the confidence-scheduled solver reports a
    residual at most eps: ``1 + floor(scale^2)`` always, and under a growth
    profile (with gamma < delta_mass) also ``5 + 4 * growth_factor``."""
    basic = 1 + inputs.deterministic_budget
    growth_bound = None
    if growth is not None:
        if inputs.gamma >= growth.delta_mass:
            raise ValueError(
                f"growth bound needs gamma < delta_mass, got gamma={inputs.gamma} "
                f">= delta_mass={growth.delta_mass}"
            )
        growth_bound = 5.0 + 4.0 * _growth_factor(inputs, growth)
    return ConfidentBounds(basic=basic, growth=growth_bound)


# ---------------------------------------------------------------------------
# Hitting-time simulator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HittingTimeSummary:
    """Empirical summary of the steps a Bernoulli(p) counting process needs
    to reach a target count."""

    mean: float
    variance: float
    trials: int
    target: int
    p: float
    steps: np.ndarray
    counts: np.ndarray

    def probability(self, k):
        """Empirical fraction of trials that first hit the target at step k."""
        idx = np.searchsorted(self.steps, k)
        if idx < self.steps.shape[0] and self.steps[idx] == k:
            return float(self.counts[idx]) / self.trials
        return 0.0


def _simulate_shard(target, p, trials, rng):
    times = np.zeros(trials, dtype=np.int64)
    successes = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    step = 0
    while active.size:
        step += 1
        successes[active] += rng.random(active.size) < p
        done = successes[active] >= target
        times[active[done]] = step
        active = active[~done]
    return times


def simulate_hitting_time(target, p, trials, rng, shards=1):
    """Simulate the Bernoulli(p) counting process to absorption at the
    target count, one step at a time.

    ``shards`` splits the trials across independent child streams spawned
    from ``rng``; results are concatenated in shard order, so the summary
    does not depend on how shards are scheduled.
    """
    target = int(target)
    trials = int(trials)
    shards = int(shards)
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if shards < 1:
        raise ValueError(f"shards must be >= 1, got {shards}")
    shards = min(shards, trials)
    if shards == 1:
        times = _simulate_shard(target, p, trials, rng)
    else:
        sizes = [trials // shards + (1 if i < trials % shards else 0) for i in range(shards)]
        streams = rng.spawn(shards)
        times = np.concatenate(
            [_simulate_shard(target, p, size, stream) for size, stream in zip(sizes, streams)]
        )
    steps, counts = np.unique(times, return_counts=True)
    return HittingTimeSummary(
        mean=float(times.mean()),
        variance=float(times.var()),
        trials=trials,
        target=target,
        p=float(p),
        steps=steps,
        counts=counts,
    )
