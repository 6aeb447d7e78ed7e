"""Request/response models for the HTTP service.

The problem document mirrors the on-disk problem file format; solver and
generator configuration reuse the experiment-spec models so the CLI, the
service, and spec files all validate identically.
"""

from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..experiments import (
    ExperimentReportModel,
    ExperimentSpec,
    GeneratorUnion,
    SolverUnion,
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------------------------------------------------------------------------
# Problem documents
# ---------------------------------------------------------------------------


class AffineDoc(_Strict):
    kind: Literal["affine"]
    a: list[float]
    b: float


class BallDoc(_Strict):
    kind: Literal["ball"]
    center: list[float]
    radius: float


class QuadraticDoc(_Strict):
    kind: Literal["quadratic"]
    q: list[list[float]]
    a: list[float]
    b: float


class MaxDoc(_Strict):
    kind: Literal["max"]
    pieces: list["ConstraintUnion"]


ConstraintUnion = Annotated[
    Union[AffineDoc, BallDoc, QuadraticDoc, MaxDoc], Field(discriminator="kind")
]
MaxDoc.model_rebuild()


class UniformBoxDoc(_Strict):
    kind: Literal["uniform_box"]
    lo: list[float]
    hi: list[float]


class GaussianDoc(_Strict):
    kind: Literal["gaussian"]
    mean: list[float]
    std: list[float]


DistributionUnion = Annotated[Union[UniformBoxDoc, GaussianDoc], Field(discriminator="kind")]


class WorkingBallDoc(_Strict):
    center: list[float]
    radius: float = Field(gt=0)


class ProblemDocument(_Strict):
    dimension: int = Field(ge=1)
    type: Literal["finite", "parametric"]
    constraints: Optional[list[ConstraintUnion]] = None
    template: Optional[Literal["affine", "ball"]] = None
    distribution: Optional[DistributionUnion] = None
    lipschitz_bound: Optional[float] = Field(default=None, gt=0)
    working_ball: Optional[WorkingBallDoc] = None
    metadata: Optional[dict] = None

    @model_validator(mode="after")
    def _fields_match_type(self):
        if self.type == "finite":
            if not self.constraints:
                raise ValueError("finite problems need a nonempty 'constraints' list")
        else:
            if self.template is None or self.distribution is None:
                raise ValueError("parametric problems need 'template' and 'distribution'")
        return self

    def to_family_dict(self):
        return self.model_dump(exclude_none=True)


# ---------------------------------------------------------------------------
# Requests and responses
# ---------------------------------------------------------------------------


class HealthResponse(_Strict):
    status: str
    version: str


class GenerateRequest(_Strict):
    generator: GeneratorUnion


class GenerateResponse(_Strict):
    problem: ProblemDocument


class SolveRequest(_Strict):
    problem: ProblemDocument
    solver: SolverUnion
    seed: int = 0
    x0: Optional[list[float]] = None
    include_trace: bool = True

    @model_validator(mode="after")
    def _start_available(self):
        if self.x0 is None and not (self.problem.metadata or {}).get("x0"):
            raise ValueError("no starting point: pass x0 or use a problem file with metadata.x0")
        return self


class TraceRowDoc(_Strict):
    k: int
    residual: float
    batch_argmax: int
    moved: bool


class PairDoc(_Strict):
    k: int
    eps: float
    batch_size: int
    x: list[float]


class SolveResponse(_Strict):
    iterations: int
    stop_reason: str
    final_x: list[float]
    final_residual: Optional[float] = None
    moves: int
    cumulative_samples: int
    trace: Optional[list[TraceRowDoc]] = None
    pairs: Optional[list[PairDoc]] = None


class GrowthDoc(_Strict):
    mu: float = Field(gt=0)
    degree: float = Field(ge=1)
    delta_mass: float = Field(gt=0, le=1)


class BoundsRequest(_Strict):
    lipschitz: float = Field(gt=0)
    dist0: float = Field(gt=0)
    eps: float = Field(gt=0)
    gamma: float = Field(gt=0, lt=1)
    batch_size: int = Field(default=1, ge=1)
    growth: Optional[GrowthDoc] = None
    tail_at: Optional[int] = None


class BoundsResponse(_Strict):
    lipschitz: float
    dist0: float
    eps: float
    gamma: float
    batch_size: int
    p: float
    deterministic_budget: int
    expected_iterations: float
    expected_iterations_growth: Optional[float] = None
    confident_basic: int
    confident_growth: Optional[float] = None
    concentration_tail: Optional[float] = None


class CoverageExactRequest(_Strict):
    problem: ProblemDocument
    x: list[float]
    eps: float


class CoverageExactResponse(_Strict):
    coverage: float


class CoverageMcRequest(_Strict):
    problem: ProblemDocument
    x: list[float]
    eps: float
    trials: int = Field(ge=1)
    seed: int = 0


class CoverageMcResponse(_Strict):
    estimate: float
    lower: float
    upper: float
    trials: int


class QuantileRequest(_Strict):
    problem: ProblemDocument
    x: list[float]
    gamma: float = Field(gt=0, lt=1)


class QuantileResponse(_Strict):
    residual: float


class AuditRequest(_Strict):
    problem: ProblemDocument
    gamma: float = Field(gt=0, lt=1)
    pairs: list[PairDoc]
    trials: Optional[int] = Field(default=None, ge=1)
    seed: int = 0


class AuditPairDoc(_Strict):
    k: int
    eps: float
    coverage: float
    error: bool
    interval: Optional[list[float]] = None


class AuditResponse(_Strict):
    gamma: float
    mode: str
    n_pairs: int
    error_count: int
    first_error_index: Optional[int] = None
    first_error_k: Optional[int] = None
    pairs: list[AuditPairDoc]


class HittingTimeRequest(_Strict):
    target: int = Field(ge=1)
    p: float = Field(gt=0, le=1)
    trials: int = Field(ge=1)
    seed: int = 0
    shards: int = Field(default=1, ge=1)


class HittingTimeResponse(_Strict):
    mean: float
    variance: float
    trials: int
    target: int
    p: float
    histogram: list[list[int]]


class ExperimentRequest(_Strict):
    spec: ExperimentSpec
    workers: int = Field(default=1, ge=1)


__all__ = [
    "AuditPairDoc",
    "AuditRequest",
    "AuditResponse",
    "BoundsRequest",
    "BoundsResponse",
    "ConstraintUnion",
    "CoverageExactRequest",
    "CoverageExactResponse",
    "CoverageMcRequest",
    "CoverageMcResponse",
    "ExperimentReportModel",
    "ExperimentRequest",
    "ExperimentSpec",
    "GenerateRequest",
    "GenerateResponse",
    "GrowthDoc",
    "HealthResponse",
    "HittingTimeRequest",
    "HittingTimeResponse",
    "PairDoc",
    "ProblemDocument",
    "QuantileRequest",
    "QuantileResponse",
    "SolveRequest",
    "SolveResponse",
    "TraceRowDoc",
]
