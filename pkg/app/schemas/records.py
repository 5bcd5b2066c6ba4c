from dataclasses import dataclass, field
from typing import List, Optional
import math

from pydantic import BaseModel, Field

from app.schemas.fields import ControlField


RUN_RECORD_HEADER = ("n", "t_n", "m_n", "f_hat", "r_n", "r_hat", "clamp_count", "wall_ms")
SWEEP_HEADER = ("mesh_n", "h_hat", "n_triangles", "f_hat", "n_iters", "terminated")


class NewtonReport(BaseModel):
    iterations: int
    final_residual_norm: float
    converged: bool
    residual_history: List[float] = Field(default_factory=list)


class RunRow(BaseModel):
    n: int
    t_n: float
    m_n: int
    f_hat: float = math.nan
    r_n: float = math.nan
    r_hat: Optional[float] = None
    clamp_count: int = 0
    wall_ms: float = 0.0


class RunSummary(BaseModel):
    n_iters: int
    f_hat_final: Optional[float] = None
    r_hat_final: Optional[float] = None
    terminated: bool = False
    reason: str = "n_max"
    bias_sum: float = 0.0
    max_abs_control: float = 0.0
    total_clamp_count: int = 0
    mesh_n: Optional[int] = None
    n_triangles: Optional[int] = None
    h_hat: Optional[float] = None
    seed: Optional[int] = None
    substream: Optional[int] = None


@dataclass
class RunRecord:
    """Per-iteration log of an optimization run plus the current iterate"""

    rows: List[RunRow] = field(default_factory=list)
    control: Optional[ControlField] = None
    bias_sum: float = 0.0
    terminated: bool = False
    reason: str = "n_max"

    def append(self, row: RunRow) -> None:
        if self.rows and row.n <= self.rows[-1].n:
            raise ValueError(f"Row n={row.n} does not follow n={self.rows[-1].n}")
        self.rows.append(row)

    @property
    def last(self) -> Optional[RunRow]:
        return self.rows[-1] if self.rows else None

    @property
    def n_iters(self) -> int:
        return self.rows[-1].n if self.rows else 0

    def r_values(self) -> List[float]:
        return [row.r_n for row in self.rows]

    def summary(self, **extra) -> RunSummary:
        last = self.last
        f_hat = last.f_hat if last is not None and not math.isnan(last.f_hat) else None
        return RunSummary(
            n_iters=self.n_iters,
            f_hat_final=f_hat,
            r_hat_final=last.r_hat if last is not None else None,
            terminated=self.terminated,
            reason=self.reason,
            bias_sum=self.bias_sum,
            total_clamp_count=sum(row.clamp_count for row in self.rows),
            **extra,
        )


class ScheduleDiagnostics(BaseModel):
    passed: bool
    failures: List[str] = Field(default_factory=list)
    notes: List[str] = Field(default_factory=list)


class SweepRow(BaseModel):
    mesh_n: int
    h_hat: float
    n_triangles: int
    f_hat: Optional[float] = None
    n_iters: int
    terminated: bool
    # not written to the table
    error: Optional[str] = None


class GradientTrial(BaseModel):
    trial: int
    epsilon: float
    finite_difference: float
    adjoint: float
    relative_error: float


class GradientCheckReport(BaseModel):
    trials: List[GradientTrial] = Field(default_factory=list)
    worst_relative_error: float = 0.0
    threshold: float = 1e-4
    epsilon_sweep: List[GradientTrial] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.worst_relative_error <= self.threshold


class ProxCheckReport(BaseModel):
    pairs: int
    worst_abs_error: float
    threshold: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.worst_abs_error <= self.threshold
