"""Pydantic schemas for problem files, scenario files and reports"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SolverStatus(str, Enum):
    """Solve status enum"""
    SUCCESS = "success"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_CAP = "iteration_cap"


class SystemName(str, Enum):
    """Demo system enum"""
    BICYCLE = "bicycle"
    VANDERPOL = "vanderpol"
    TOY = "toy"


class BenchMode(str, Enum):
    """Benchmark mode enum"""
    LATENCY = "latency"
    THROUGHPUT = "throughput"


# Input documents
class LPFile(BaseModel):
    """Linear program in general form; every field except c is optional"""

    model_config = ConfigDict(extra="forbid")

    c: List[float] = Field(..., min_length=1, description="objective vector")
    A_ub: Optional[List[List[float]]] = Field(None, description="inequality matrix (m_ub x n)")
    b_ub: Optional[List[float]] = Field(None, description="inequality right-hand side")
    A_eq: Optional[List[List[float]]] = Field(None, description="equality matrix (m_eq x n)")
    b_eq: Optional[List[float]] = Field(None, description="equality right-hand side")
    unbounded: bool = Field(False, description="free variables instead of x >= 0")

    def to_problem(self):
        from lpreach.services.lp_core import GeneralLP

        return GeneralLP.create(
            self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq, unbounded=self.unbounded
        )


class ObstacleSpec(BaseModel):
    """Ball obstacle o(x) = radius^2 - |x[coords] - center|^2; unsafe where o >= 0"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    center: List[float] = Field(..., min_length=1, description="obstacle center")
    radius: float = Field(..., gt=0, description="obstacle radius")
    coords: Optional[List[int]] = Field(
        None, description="state coordinates the center refers to; defaults to the leading ones"
    )

    @model_validator(mode="after")
    def _check_coords(self) -> "ObstacleSpec":
        if self.coords is not None and len(self.coords) != len(self.center):
            raise ValueError("coords and center must have the same length")
        return self

    @property
    def state_coords(self) -> List[int]:
        return list(self.coords) if self.coords is not None else list(range(len(self.center)))


class NudgeConfig(BaseModel):
    """Gradient-descent settings for feedforward nudging"""

    model_config = ConfigDict(extra="forbid")

    eta: float = Field(0.05, gt=0, description="initial step size")
    max_outer_iters: int = Field(100, ge=0, description="outer iteration budget")
    dt: float = Field(..., gt=0, description="Euler step")
    horizon: float = Field(..., gt=0, description="time horizon T")
    backoff: float = Field(0.5, gt=0, le=1, description="step-size factor after a rejected step")
    block_steps: int = Field(1, ge=1, description="steps sharing one gradient parameter")
    refine: bool = Field(True, description="LP refinement on (ablation switch)")
    enclose: bool = Field(True, description="validated step enclosure in the tube integrator")


class ScenarioFile(BaseModel):
    """Demo scenario document"""

    model_config = ConfigDict(extra="forbid")

    system: SystemName = Field(..., description="demo system")
    H: Optional[List[List[float]]] = Field(None, description="lifting matrix (m x n)")
    H_plus: Optional[List[List[float]]] = Field(None, description="left inverse of H (n x m)")
    params: Dict[str, float] = Field(default_factory=dict, description="system parameters (mu, lf, lr)")
    initial_lo: List[float] = Field(..., description="lower corner of the initial state box")
    initial_hi: List[float] = Field(..., description="upper corner of the initial state box")
    disturbance_lo: Optional[List[float]] = Field(None, description="lower disturbance bound")
    disturbance_hi: Optional[List[float]] = Field(None, description="upper disturbance bound")
    u_ff: Optional[List[List[float]]] = Field(None, description="feedforward table, one row per step")
    K: Optional[List[List[float]]] = Field(None, description="feedback gain (p x n)")
    x_nom: Optional[List[List[float]]] = Field(None, description="nominal states, one row per step")
    obstacle: Optional[ObstacleSpec] = None
    dt: float = Field(..., gt=0, description="Euler step")
    T: float = Field(..., gt=0, description="time horizon")
    eta: Optional[float] = Field(None, gt=0)
    max_outer_iters: Optional[int] = Field(None, ge=0)
    block_steps: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _check_box(self) -> "ScenarioFile":
        if len(self.initial_lo) != len(self.initial_hi):
            raise ValueError("initial_lo and initial_hi must have the same length")
        if any(lo > hi for lo, hi in zip(self.initial_lo, self.initial_hi)):
            raise ValueError("initial_lo must not exceed initial_hi")
        if (self.disturbance_lo is None) != (self.disturbance_hi is None):
            raise ValueError("disturbance_lo and disturbance_hi must be given together")
        if (self.K is None) != (self.x_nom is None):
            raise ValueError("K and x_nom must be given together")
        return self


# Output documents
class SolutionDocument(BaseModel):
    """Solution written by the solve command"""

    status: SolverStatus
    feasible: bool
    bounded: bool
    success: bool
    iterations: int
    hit_iteration_cap: bool
    x: List[float] = Field(..., description="optimal point; zeros unless success")
    fun: float = Field(..., description="objective value; 0 unless success")
    basis: List[int] = Field(..., description="final basic column per constraint row")


class RunSummary(BaseModel):
    """Summary of a reachability run"""

    name: str
    steps: int
    dt: float
    t_final: float
    refine: bool
    order_violation: bool
    violation_step: Optional[int] = None
    enclosure_failed: bool = Field(False, description="a step enclosure could not be validated; the run was truncated")
    initial_unsafe: Optional[bool] = Field(None, description="the initial set already meets the obstacle")
    flagged_refinements: int = 0
    bound_width_sum: float
    bound_volume: float
    safety_value: Optional[float] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    samples: Optional[int] = Field(None, description="Monte Carlo trajectories checked")
    samples_outside: Optional[int] = Field(None, description="sampled trajectories leaving the tube")
    runtime_seconds: float


class BenchReport(BaseModel):
    """Mean and standard deviation of a repeated workload"""

    name: str
    mode: BenchMode = BenchMode.LATENCY
    sample_size: int = Field(..., ge=1)
    mean_seconds: float
    std_seconds: float = Field(..., ge=0)
    median_seconds: float
    warmup_seconds: float
    metrics: Dict[str, float] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)

    def table_row(self) -> str:
        """Name | mean ± std | extra column (bound size when present)"""
        row = f"| {self.name} | {self.mean_seconds:.6g} ± {self.std_seconds:.6g} |"
        if "bound_size" in self.metrics:
            row += f" {self.metrics['bound_size']:.6g} |"
        return row
