"""Confidence-scheduled variant of the minibatch Polyak solver.

Instead of a fixed batch size, iteration k draws
``ceil((1/gamma) * ln(2 k^2 / alpha))`` samples. Every iteration then
emits a certified pair: the previous iterate together with the residual
just computed at it. Across the whole run, the probability that any pair
fails coverage ``1 - gamma`` is at most alpha, because a failing iterate
would have to put all L_k samples inside a set of measure below
``1 - gamma``, an event of probability below ``alpha / (2 k^2)``.

``error_audit`` re-checks the pairs against the true coverage: exactly for
finite families, by Monte Carlo with confidence intervals otherwise.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .certify import CoverageQuery, coverage_exact, coverage_mc
from .errors import DimensionMismatchError, InfeasibleConstraintError
from .solver import IterationRecord, RunTrace, SolverState
from .steps import StepParams, polyak_step, project


def schedule_batch_size(gamma, alpha, k):
    """Batch size for iteration k: ``ceil((1/gamma) * ln(2 k^2 / alpha))``.

    The returned n always satisfies ``(1-gamma)^n <= alpha / (2 k^2)``,
    which is what the no-error guarantee needs. It can exceed the minimal
    such integer (see :func:`minimal_batch_size`) because it bounds
    ``-ln(1-gamma)`` below by gamma.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    k = int(k)
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    return int(math.ceil(math.log(2.0 * k * k / alpha) / gamma))


def minimal_batch_size(gamma, alpha, k):
    """Smallest n with ``(1-gamma)^n <= alpha / (2 k^2)``; the exact
    requirement that :func:`schedule_batch_size` over-covers."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    k = int(k)
    if k < 1:
        raise ValueError(f"iteration index must be >= 1, got {k}")
    n = int(math.ceil(math.log(2.0 * k * k / alpha) / -math.log1p(-gamma)))
    # Guard the ceiling against float error at integer boundaries.
    while n > 1 and (1.0 - gamma) ** (n - 1) <= alpha / (2.0 * k * k):
        n -= 1
    while (1.0 - gamma) ** n > alpha / (2.0 * k * k):
        n += 1
    return n


@dataclass(frozen=True)
class ConfidentConfig:
    gamma: float
    alpha: float
    stop: object
    step: StepParams = field(default_factory=StepParams)
    region: object | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class CertifiedPair:
    """An iterate x_k and the residual computed at it one iteration later,
    plus the batch size that produced the residual."""

    x: np.ndarray
    eps: float
    k: int
    batch_size_used: int


@dataclass
class ConfidentRun:
    trace: RunTrace
    pairs: list

    def write_pairs_csv(self, target):
        """Columns (k, eps, batch_size, cumulative_samples)."""
        text = self.pairs_csv_text()
        own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
        fh = open(target, "w", newline="") if own else target
        try:
            fh.write(text)
        finally:
            if own:
                fh.close()

    def pairs_csv_text(self):
        return pairs_csv([(p.k, p.eps, p.batch_size_used) for p in self.pairs])

    def write_pairs_json(self, target):
        """Full pair stream including iterates, as the audit needs them."""
        doc = pairs_to_dicts(self.pairs)
        own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
        fh = open(target, "w") if own else target
        try:
            json.dump(doc, fh, indent=2)
        finally:
            if own:
                fh.close()


def pairs_csv(rows):
    """Render (k, eps, batch_size) rows to the certified-pair CSV format,
    accumulating the running sample total."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "eps", "batch_size", "cumulative_samples"])
    running = 0
    for k, eps, batch_size in rows:
        running += int(batch_size)
        writer.writerow([int(k), repr(float(eps)), int(batch_size), running])
    return buf.getvalue()


def pairs_to_dicts(pairs):
    return [
        {"k": p.k, "eps": p.eps, "batch_size": p.batch_size_used, "x": p.x.tolist()}
        for p in pairs
    ]


def pairs_from_dicts(docs):
    return [
        CertifiedPair(
            x=np.asarray(d["x"], dtype=float),
            eps=float(d["eps"]),
            k=int(d["k"]),
            batch_size_used=int(d["batch_size"]),
        )
        for d in docs
    ]


def load_pairs(path):
    with open(path) as fh:
        return pairs_from_dicts(json.load(fh))


def run_confident(family, x0, config):
    """Run the confidence-scheduled solver until the stop rule fires.

    Returns the trace plus one certified pair per executed iteration; the
    pair emitted by iteration k is ``(x_{k-1}, eps_{k-1})``. Sampling is
    always with replacement, since the schedule can exceed a finite
    family's size.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (family.dimension,):
        raise DimensionMismatchError(
            f"x0 has shape {x0.shape}, family expects ({family.dimension},)"
        )
    rng = np.random.default_rng(config.seed)
    state = SolverState(x=x0.copy(), last_residual=math.nan, k=0, rng=rng)
    stop = config.stop

    records = []
    pairs = []
    cumulative = 0
    stop_reason = None
    while stop_reason is None and state.k < stop.max_iters:
        k = state.k + 1
        batch_size = schedule_batch_size(config.gamma, config.alpha, k)
        batch = family.sample_batch(state.rng, batch_size, mode="with")
        values = family.batch_values(batch, state.x)
        argmax = int(np.argmax(values))
        residual = float(values[argmax])
        pairs.append(
            CertifiedPair(x=state.x.copy(), eps=residual, k=state.k, batch_size_used=batch_size)
        )
        if residual > 0.0:
            g = family.subgradient(batch[argmax], state.x)
            try:
                x_new = polyak_step(state.x, residual, g, config.step)
            except InfeasibleConstraintError as err:
                err.omega = batch[argmax]
                err.iteration = k
                raise
            x_new = project(config.region, x_new)
        else:
            x_new = state.x
        state = SolverState(
            x=x_new, last_residual=residual, k=k, rng=state.rng, last_batch_argmax=argmax
        )
        cumulative += batch_size
        records.append(
            IterationRecord(k=k, residual=residual, batch_argmax=argmax, moved=residual > 0.0)
        )
        if stop.residual_target is not None and residual <= stop.residual_target:
            stop_reason = "residual_target"
        elif (
            stop.coverage_target is not None
            and k % stop.coverage_target.check_every == 0
            and coverage_exact(family, CoverageQuery(x=state.x, eps=stop.coverage_target.eps))
            >= 1.0 - stop.coverage_target.gamma
        ):
            stop_reason = "coverage_target"
    if stop_reason is None:
        stop_reason = "max_iters"
    trace = RunTrace(
        records=records,
        x_final=state.x.copy(),
        last_residual=state.last_residual,
        iterations=state.k,
        stop_reason=stop_reason,
        cumulative_samples=cumulative,
        config=None,
    )
    return ConfidentRun(trace=trace, pairs=pairs)


@dataclass(frozen=True)
class PairAudit:
    k: int
    eps: float
    coverage: float
    error: bool
    interval: tuple | None = None


@dataclass
class AuditReport:
    """Per-pair coverage check against the ``1 - gamma`` requirement."""

    gamma: float
    mode: str  # "exact" or "monte_carlo"
    pairs: list

    @property
    def n_pairs(self):
        return len(self.pairs)

    @property
    def error_count(self):
        return sum(1 for p in self.pairs if p.error)

    @property
    def first_error_index(self):
        for i, p in enumerate(self.pairs):
            if p.error:
                return i
        return None

    @property
    def first_error_k(self):
        i = self.first_error_index
        return None if i is None else self.pairs[i].k

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "mode": self.mode,
            "n_pairs": self.n_pairs,
            "error_count": self.error_count,
            "first_error_index": self.first_error_index,
            "first_error_k": self.first_error_k,
            "pairs": [
                {
                    "k": p.k,
                    "eps": p.eps,
                    "coverage": p.coverage,
                    "error": p.error,
                    **({"interval": list(p.interval)} if p.interval is not None else {}),
                }
                for p in self.pairs
            ],
        }


def error_audit(pairs, family, gamma, trials=None, rng=None):
    """Check every certified pair against true coverage at its own eps.

    A pair errs when ``P{f_omega(x) <= eps} < 1 - gamma``. Exact for
    finite families; for parametric families pass ``trials`` (and an rng)
    to audit by Monte Carlo, flagging on the point estimate and reporting
    the Wilson interval alongside.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    results = []
    if family.is_finite:
        for pair in pairs:
            cov = coverage_exact(family, CoverageQuery(x=pair.x, eps=pair.eps))
            results.append(
                PairAudit(k=pair.k, eps=pair.eps, coverage=cov, error=cov < 1.0 - gamma)
            )
        return AuditReport(gamma=gamma, mode="exact", pairs=results)
    if trials is None:
        raise ValueError("auditing a parametric family needs trials= (Monte-Carlo mode)")
    if rng is None:
        rng = np.random.default_rng(0)
    for pair in pairs:
        est = coverage_mc(family, CoverageQuery(x=pair.x, eps=pair.eps), trials, rng)
        results.append(
            PairAudit(
                k=pair.k,
                eps=pair.eps,
                coverage=est.estimate,
                error=est.estimate < 1.0 - gamma,
                interval=(est.lower, est.upper),
            )
        )
    return AuditReport(gamma=gamma, mode="monte_carlo", pairs=results)
