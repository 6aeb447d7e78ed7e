"""Minibatch Polyak feasibility solver.

Each iteration draws a batch of constraints, takes the batch maximum of
their values at the current iterate as the residual, and -- when the
residual is positive -- makes one Polyak step along the maximizing
constraint's subgradient (ties broken by lowest batch index). The loop
itself never halts; stopping is a harness concern expressed by
:class:`StopRule`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .certify import CoverageQuery, coverage_exact
from .errors import DimensionMismatchError, InfeasibleConstraintError
from .steps import StepParams, polyak_step, project, region_to_dict


@dataclass(frozen=True)
class CoverageTarget:
    """Stop once exact coverage at level eps reaches 1 - gamma.

    Test and benchmark use only: it needs a finite family and an exact
    coverage evaluation every ``check_every`` iterations.
    """

    eps: float
    gamma: float
    check_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.check_every < 1:
            raise ValueError(f"check_every must be >= 1, got {self.check_every}")


@dataclass(frozen=True)
class StopRule:
    max_iters: int
    residual_target: float | None = None
    coverage_target: CoverageTarget | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class RunConfig:
    batch_size: int
    stop: StopRule
    step: StepParams = field(default_factory=StepParams)
    region: object | None = None
    seed: int = 0
    replacement: str = "with"
    snapshot_every: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.replacement not in ("with", "without"):
            raise ValueError(f"replacement must be 'with' or 'without', got {self.replacement!r}")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1 or None")

    def to_dict(self):
        return {
            "batch_size": self.batch_size,
            "step": {"delta": self.step.delta},
            "region": region_to_dict(self.region),
            "stop": {
                "max_iters": self.stop.max_iters,
                "residual_target": self.stop.residual_target,
                "coverage_target": None
                if self.stop.coverage_target is None
                else {
                    "eps": self.stop.coverage_target.eps,
                    "gamma": self.stop.coverage_target.gamma,
                    "check_every": self.stop.coverage_target.check_every,
                },
            },
            "seed": self.seed,
            "replacement": self.replacement,
            "snapshot_every": self.snapshot_every,
        }


@dataclass
class SolverState:
    """Iterate, last batch-maximum residual, iteration count, and the rng
    stream owning all of this run's draws."""

    x: np.ndarray
    last_residual: float
    k: int
    rng: np.random.Generator
    last_batch_argmax: int | None = None


@dataclass(frozen=True)
class IterationRecord:
    k: int
    residual: float
    batch_argmax: int
    moved: bool
    x: np.ndarray | None = None


@dataclass
class RunTrace:
    """Everything a run produced, one record per executed iteration."""

    records: list
    x_final: np.ndarray
    last_residual: float
    iterations: int
    stop_reason: str
    cumulative_samples: int
    config: RunConfig | None = None

    @property
    def moves(self):
        return sum(1 for r in self.records if r.moved)

    def residuals(self):
        return np.array([r.residual for r in self.records])

    def first_residual_at_most(self, level):
        """Iteration index (1-based) of the first residual <= level, or None."""
        for r in self.records:
            if r.residual <= level:
                return r.k
        return None

    def write_csv(self, target):
        """Columns (k, residual, moved, stop_reason); stop_reason only on
        the last row. ``target`` is a path or a text file object."""
        text = self.csv_text()
        own = isinstance(target, (str, bytes)) or hasattr(target, "__fspath__")
        fh = open(target, "w", newline="") if own else target
        try:
            fh.write(text)
        finally:
            if own:
                fh.close()

    def csv_text(self):
        rows = [(r.k, r.residual, r.moved) for r in self.records]
        return trace_csv(rows, self.stop_reason)

    def config_json(self):
        doc = {
            "config": None if self.config is None else self.config.to_dict(),
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "cumulative_samples": self.cumulative_samples,
            "last_residual": self.last_residual,
            "x_final": self.x_final.tolist(),
        }
        return json.dumps(doc, indent=2)


def trace_csv(rows, stop_reason):
    """Render (k, residual, moved) rows to the trace CSV format; the stop
    reason appears only on the last row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k", "residual", "moved", "stop_reason"])
    rows = list(rows)
    last = len(rows) - 1
    for i, (k, residual, moved) in enumerate(rows):
        writer.writerow([k, repr(float(residual)), int(moved), stop_reason if i == last else ""])
    if not rows:
        writer.writerow([0, "", 0, stop_reason])
    return buf.getvalue()


def pfm_iterate(state, family, config):
    """One iteration: draw a batch, take the sample-maximum residual, and
    step (then project) if the residual is positive."""
    if state.x.shape[0] != family.dimension:
        raise DimensionMismatchError(
            f"iterate has dimension {state.x.shape[0]}, family expects {family.dimension}"
        )
    batch = family.sample_batch(state.rng, config.batch_size, mode=config.replacement)
    values = family.batch_values(batch, state.x)
    argmax = int(np.argmax(values))  # lowest index on ties
    residual = float(values[argmax])
    if residual > 0.0:
        g = family.subgradient(batch[argmax], state.x)
        try:
            x_new = polyak_step(state.x, residual, g, config.step)
        except InfeasibleConstraintError as err:
            err.omega = batch[argmax]
            err.iteration = state.k + 1
            raise
        x_new = project(config.region, x_new)
    else:
        x_new = state.x
    return SolverState(
        x=x_new,
        last_residual=residual,
        k=state.k + 1,
        rng=state.rng,
        last_batch_argmax=argmax,
    )


def _coverage_reached(family, x, target):
    query = CoverageQuery(x=x, eps=target.eps)
    return coverage_exact(family, query) >= 1.0 - target.gamma


def run_pfm(family, x0, config):
    """Run the solver until the stop rule fires; returns the trace.

    Identical (family, x0, config) including the seed reproduce the trace
    bit-exactly. Exhausting max_iters is a normal stop, not an error.
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
    cumulative = 0
    stop_reason = None
    if stop.coverage_target is not None and _coverage_reached(family, state.x, stop.coverage_target):
        stop_reason = "coverage_target"
    while stop_reason is None and state.k < stop.max_iters:
        state = pfm_iterate(state, family, config)
        cumulative += config.batch_size
        snap = config.snapshot_every is not None and state.k % config.snapshot_every == 0
        records.append(
            IterationRecord(
                k=state.k,
                residual=state.last_residual,
                batch_argmax=state.last_batch_argmax,
                moved=state.last_residual > 0.0,
                x=state.x.copy() if snap else None,
            )
        )
        if stop.residual_target is not None and state.last_residual <= stop.residual_target:
            stop_reason = "residual_target"
        elif (
            stop.coverage_target is not None
            and state.k % stop.coverage_target.check_every == 0
            and _coverage_reached(family, state.x, stop.coverage_target)
        ):
            stop_reason = "coverage_target"
    if stop_reason is None:
        stop_reason = "max_iters"
    return RunTrace(
        records=records,
        x_final=state.x.copy(),
        last_residual=state.last_residual,
        iterations=state.k,
        stop_reason=stop_reason,
        cumulative_samples=cumulative,
        config=config,
    )
