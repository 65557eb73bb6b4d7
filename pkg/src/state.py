"""
Configuration and report models, and the state carried through the benchmark pipeline.
"""
import os
from typing import Any, ClassVar, Dict, List, Literal, Optional, Tuple, TypedDict

from pydantic import BaseModel, Field, field_validator, model_validator


class SetupConfig(BaseModel):
    """Hierarchy construction parameters."""
    aggregation_exponent: int = Field(default=3, ge=1, description="Pairwise steps composed per level (aggregates of size <= 2^s)")
    coarse_size: Optional[int] = Field(default=None, ge=1, description="Stop coarsening at this global size; None means 40 * cbrt(n)")
    max_levels: int = Field(default=40, ge=1)
    smooth_vector: Literal["ones", "random"] = "ones"

    def resolved_coarse_size(self, global_n: int) -> int:
        if self.coarse_size is not None:
            return self.coarse_size
        nd = int(round(global_n ** (1.0 / 3.0)))
        if nd ** 3 < global_n:
            nd += 1
        return 40 * max(nd, 1)


class CycleConfig(BaseModel):
    """V-cycle parameters; pre and post sweeps must agree for a symmetric preconditioner."""
    pre_sweeps: int = Field(default=4, ge=0)
    post_sweeps: int = Field(default=4, ge=0)
    coarsest_sweeps: int = Field(default=20, ge=0)
    relaxation_weight: float = Field(default=1.0, gt=0.0)


class SolveConfig(BaseModel):
    rtol: float = Field(default=1e-6, gt=0.0, lt=1.0)
    max_iters: int = Field(default=1000, ge=1)
    precflag: bool = True


def _default_ranks() -> int:
    return int(os.getenv("MATCHAMG_RANKS", "1"))


class RunConfig(BaseModel):
    """One benchmark run: the system, the rank count and every solver parameter."""
    nd: Optional[int] = Field(default=None, ge=1, description="Poisson grid points per dimension")
    matrix_path: Optional[str] = None
    ranks: int = Field(default_factory=_default_ranks, ge=1)
    scaled: bool = True
    setup: SetupConfig = Field(default_factory=SetupConfig)
    cycle: CycleConfig = Field(default_factory=CycleConfig)
    solve: SolveConfig = Field(default_factory=SolveConfig)
    seed: int = 0
    report_format: Literal["text", "json"] = "text"
    pdf_path: Optional[str] = None

    @model_validator(mode="after")
    def _one_problem(self):
        if (self.nd is None) == (self.matrix_path is None):
            raise ValueError("exactly one of nd (generator) or matrix_path (MatrixMarket) is required")
        return self

    @property
    def problem_label(self) -> str:
        if self.nd is not None:
            return f"poisson7 nd={self.nd}"
        return f"matrix {os.path.basename(self.matrix_path)}"


class SolveStats(BaseModel):
    """Outcome of one PCG solve."""
    iterations: int
    final_relres: float
    history: List[float]
    converged: bool


class LevelStats(BaseModel):
    level: int
    rows: int
    nnz: int

    @property
    def nnz_per_row(self) -> float:
        return self.nnz / self.rows if self.rows else 0.0


class SetupBreakdown(BaseModel):
    """Setup wall time split the way the setup is instrumented (seconds, slowest rank)."""
    matching: float = 0.0
    spmm: float = 0.0
    spmm_comm: float = 0.0
    other: float = 0.0

    @property
    def total(self) -> float:
        return self.matching + self.spmm + self.spmm_comm + self.other


class CommCounters(BaseModel):
    """Messages and bytes summed over ranks, per stage and phase."""
    setup_messages: Dict[str, int] = Field(default_factory=dict)
    setup_bytes: Dict[str, int] = Field(default_factory=dict)
    solve_messages: int = 0
    solve_bytes: int = 0
    solve_allreduces: int = 0


class RunReport(BaseModel):
    problem: str
    ranks: int
    global_rows: int
    global_nnz: int
    precflag: bool
    levels: List[LevelStats]
    nl: int
    opc: float
    iterations: int
    final_relres: float
    converged: bool
    residual_history: List[float]
    tsetup: float
    tsolve: float
    titer: float
    setup_breakdown: SetupBreakdown
    comm: CommCounters
    config: RunConfig

    TIMING_FIELDS: ClassVar[Tuple[str, ...]] = ("tsetup", "tsolve", "titer", "setup_breakdown")

    @field_validator("opc")
    @classmethod
    def _opc_at_least_one(cls, v: float) -> float:
        if v < 1.0:
            raise ValueError(f"operator complexity {v} is below 1")
        return v

    def without_timings(self) -> Dict[str, Any]:
        return self.model_dump(exclude=set(self.TIMING_FIELDS))


class BenchmarkState(TypedDict):
    """State for the benchmark pipeline."""
    # Input
    config: RunConfig

    # Stage outputs (one entry per rank)
    systems: Optional[List[Any]]  # (DistMatrix, DistVector) per rank
    hierarchies: Optional[List[Any]]
    solutions: Optional[List[Any]]
    solve_stats: Optional[SolveStats]

    # Instrumentation
    setup_comm: Optional[List[Any]]  # CommStats per rank
    solve_comm: Optional[List[Any]]
    tsetup: Optional[float]
    tsolve: Optional[float]

    # Output
    report: Optional[RunReport]
    pdf_path: Optional[str]
