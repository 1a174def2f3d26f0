"""
Pydantic schemas for fracsource
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationInfo, field_validator, model_validator

from src.config import defaults
from src.errors import GridError, ParameterError


class FracKind(str, Enum):
    CAPUTO_L1 = "caputo-l1"
    RL_TRAPEZOID = "rl-trapezoid"


class DerivativeRoute(str, Enum):
    ANALYTIC = "analytic"
    NUMERICAL = "numerical"


class Regime(str, Enum):
    PROVEN = "proven regime"
    OUTSIDE = "outside proven regime"


class SubcommandEnum(str, Enum):
    FORWARD = "forward"
    SYNTHESIZE = "synthesize"
    INVERT = "invert"
    VERIFY = "verify"
    CHECK_CONDITIONS = "check-conditions"
    ML_EVAL = "ml-eval"


class StudyTarget(str, Enum):
    FORWARD = "forward"
    INVERSE = "inverse"


class StudyReference(str, Enum):
    EXACT = "exact"
    SUCCESSIVE = "successive"


class RunStatusEnum(str, Enum):
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    NOT_CONVERGED = "NOT_CONVERGED"
    FAILED = "FAILED"


# Special-function parameters
class MLParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    mu: float

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        if not (0.0 < v <= 1.0) or not math.isfinite(v):
            raise ParameterError(f"alpha must lie in (0,1], got {v}")
        return v

    @field_validator("mu")
    @classmethod
    def _mu_positive(cls, v: float) -> float:
        if not (v > 0.0) or not math.isfinite(v):
            raise ParameterError(f"mu must be positive, got {v}")
        return v


class MLBound(BaseModel):
    M: float
    interval: Tuple[float, float]


# Grids
class TimeGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    T: float
    nt: int

    @model_validator(mode="after")
    def _check(self) -> "TimeGrid":
        if not (self.T > 0.0) or not math.isfinite(self.T):
            raise GridError(f"final time T must be positive, got {self.T}")
        if self.nt < 2:
            raise GridError(f"time grid needs at least 2 nodes, got {self.nt}")
        return self

    @property
    def dt(self) -> float:
        return self.T / (self.nt - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt)

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(T=self.T, nt=(self.nt - 1) * factor + 1)


class SpaceGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int

    @model_validator(mode="after")
    def _check(self) -> "SpaceGrid":
        if self.nx < 3:
            raise GridError(f"space grid needs at least 3 nodes, got {self.nx}")
        return self

    @property
    def dx(self) -> float:
        return 1.0 / (self.nx - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.nx)

    def refined(self, factor: int) -> "SpaceGrid":
        return SpaceGrid(nx=(self.nx - 1) * factor + 1)


# Audit trail
class AuditLogEntry(BaseModel):
    timestamp: str
    stage: str
    action: str
    details: Dict[str, Any]


# Reports
class BoundCheck(BaseModel):
    name: str
    lhs: float
    rhs: float
    margin: float
    holds: bool


class EstimateReport(BaseModel):
    f0: float
    g0: float
    psi0: float
    M: float
    M_alpha: float
    A0: float
    A1: float
    B1: float
    B1_derivative: Optional[float] = None
    B1_spectral: float
    b1_route: DerivativeRoute
    fstar: float
    gstar: float
    phistar: float
    epsilon: float
    condition4_value: float
    fk_value: float
    bound_checks: List[BoundCheck] = []
    warnings: List[str] = []


class ConvergenceReport(BaseModel):
    iterations: int
    converged: bool
    tol: float
    increments: List[float]
    ratios: List[Optional[float]]
    state_norms: List[float]
    iterate_bounds: List[float]
    fundamental_bounds: List[Optional[float]]
    iterate_bound_margins: List[float] = []
    iterate_bound_holds: List[bool] = []
    fundamental_bound_margins: List[Optional[float]] = []
    fundamental_bound_holds: List[Optional[bool]] = []
    distance_to_final: List[float]
    condition_value: float
    regime: Regime
    terminal_increment: float
    max_ratio: Optional[float] = None


class ConvergenceStudy(BaseModel):
    case_id: str
    target: StudyTarget
    reference: StudyReference
    axis: str
    ladder: List[Tuple[int, int]]
    steps: List[float]
    errors: List[float]
    orders: List[Optional[float]]
    observed_order: Optional[float] = None
    delta: Optional[float] = None
    complete: bool = True
    aborted_reason: Optional[str] = None

    @field_validator("ladder")
    @classmethod
    def _ladder_refines(cls, v: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
        if len(v) < 3:
            raise ValueError("a convergence ladder needs at least 3 levels")
        for (nt0, nx0), (nt1, nx1) in zip(v, v[1:]):
            if nt1 < nt0 or nx1 < nx0 or (nt1, nx1) == (nt0, nx0):
                raise ValueError("ladder levels must be strictly refining")
        return v


# Run configuration & manifest
class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    subcommand: SubcommandEnum
    case: Optional[str] = None
    alpha: Optional[float] = None
    T: Optional[float] = None
    l0: Optional[float] = None
    epsilon: float = defaults.EPSILON
    K: Optional[int] = None
    nt: int = defaults.NT
    nx: int = defaults.NX
    ny: Optional[int] = None
    tol: float = defaults.TOL
    max_iter: int = defaults.MAX_ITER
    noise_level: float = 0.0
    seed: int = defaults.SEED
    fine_factor: int = 1
    psi_file: Optional[str] = None
    output_dir: str = "output"
    ledger_url: Optional[str] = None

    dump_series: bool = False
    dump_mode: Optional[int] = None
    dump_full: bool = False
    dump_states: bool = False
    dump_coefficients: bool = False

    target: StudyTarget = StudyTarget.FORWARD
    reference: StudyReference = StudyReference.EXACT
    ladder_nt: Optional[List[int]] = None
    ladder_nx: Optional[List[int]] = None

    # ml-eval
    mu: float = 1.0
    z: Optional[float] = None

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v: Optional[float], info: ValidationInfo) -> Optional[float]:
        if v is None:
            return v
        # ml-eval also covers the exponential case alpha = 1
        if info.data.get("subcommand") == SubcommandEnum.ML_EVAL:
            if not (0.0 < v <= 1.0):
                raise ValueError("alpha must lie in (0,1]")
        elif not (0.0 < v < 1.0):
            raise ValueError("alpha must lie in (0,1)")
        return v

    @field_validator("T")
    @classmethod
    def _final_time(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not (v > 0.0):
            raise ValueError("T must be positive")
        return v

    @field_validator("l0")
    @classmethod
    def _l0(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not (0.0 < v < math.pi):
            raise ValueError("l0 must lie in (0,pi)")
        return v

    @field_validator("epsilon", "tol")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not (v > 0.0):
            raise ValueError("value must be positive")
        return v

    @field_validator("K")
    @classmethod
    def _modes(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError("K must be at least 1")
        return v

    @field_validator("nt")
    @classmethod
    def _nt(cls, v: int) -> int:
        if v < 2:
            raise ValueError("nt must be at least 2")
        return v

    @field_validator("nx")
    @classmethod
    def _nx(cls, v: int) -> int:
        if v < 3:
            raise ValueError("nx must be at least 3")
        return v

    @field_validator("max_iter", "fine_factor")
    @classmethod
    def _at_least_one(cls, v: int) -> int:
        if v < 1:
            raise ValueError("value must be at least 1")
        return v

    @field_validator("noise_level")
    @classmethod
    def _noise(cls, v: float) -> float:
        if v < 0.0:
            raise ValueError("noise_level must be non-negative")
        return v

    @field_validator("mu")
    @classmethod
    def _mu(cls, v: float) -> float:
        if not (v > 0.0):
            raise ValueError("mu must be positive")
        return v


class FileRecord(BaseModel):
    path: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    run_id: str
    subcommand: SubcommandEnum
    status: RunStatusEnum
    exit_code: Optional[int] = None
    config: Dict[str, Any]
    versions: Dict[str, str]
    started_at: str
    finished_at: Optional[str] = None
    timings: Dict[str, float] = {}
    files: List[FileRecord] = []
    message: Optional[str] = None
