from dataclasses import dataclass, field
import math

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.algorithms import BatchSchedule, ProxSpec
from app.schemas.fields import BoxSet
from app.schemas.mesh import TriMesh
from app.schemas.random_field import KLFieldSpec

# Poincare constant of the unit square, 1 / sqrt(lambda_1) with lambda_1 = 2 pi^2
POINCARE_UNIT_SQUARE = 1.0 / (math.sqrt(2.0) * math.pi)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """min E[1/2 ||y(xi) - y_D||^2] + lambda2/2 ||u||^2 + lambda1 ||u||_L1 over the box"""

    mesh: TriMesh
    a_spec: KLFieldSpec
    r_spec: KLFieldSpec
    y_d: object  # Profile: callable on (..., 2) points
    lambda1: float = 0.0
    lambda2: float = 0.0
    box: BoxSet = field(default_factory=BoxSet)
    a_floor: float = 1e-3

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError(f"lambda1 and lambda2 must be non-negative, got {self.lambda1}, {self.lambda2}")
        if self.a_spec.n_terms != self.r_spec.n_terms:
            raise ValueError("Diffusion and reaction expansions must have the same number of terms")
        if not callable(self.y_d):
            raise ValueError("Target y_D must be callable on quadrature points")

    @property
    def kl_terms(self) -> int:
        return self.a_spec.n_terms

    @property
    def prox(self) -> ProxSpec:
        return ProxSpec(lambda1=self.lambda1, box=self.box, variant="l1_box")


class EstimatorConfig(BaseModel):
    """Monitoring: m_n = increment * floor(n / period) + base fresh samples, windowed termination"""

    model_config = ConfigDict(frozen=True)

    base: int = Field(default=1, ge=1)
    increment: int = Field(default=10, ge=0)
    period: int = Field(default=50, ge=1)
    window: int = Field(default=50, ge=1)
    tol: float = Field(default=2e-4, gt=0)

    @property
    def batches(self) -> BatchSchedule:
        return BatchSchedule.estimator_rule(self.base, self.increment, self.period)

    def samples(self, n: int) -> int:
        return self.batches.size(n)


class BoundReport(BaseModel):
    """A-priori estimates for one sample, C1 = C_p^2 / a_min"""

    a_min: float
    c1: float
    state_norm: float
    state_bound: float
    adjoint_norm: float
    adjoint_bound: float
    gradient_norm: float
    gradient_bound: float

    @property
    def state_ok(self) -> bool:
        return self.state_norm <= self.state_bound * (1.0 + 1e-10) + 1e-14

    @property
    def adjoint_ok(self) -> bool:
        return self.adjoint_norm <= self.adjoint_bound * (1.0 + 1e-10) + 1e-14

    @property
    def gradient_ok(self) -> bool:
        return self.gradient_norm <= self.gradient_bound * (1.0 + 1e-10) + 1e-14

    @property
    def passed(self) -> bool:
        return self.state_ok and self.adjoint_ok and self.gradient_ok
