from dataclasses import dataclass, field
from typing import Literal
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.schemas.fields import BoxSet, ControlField


class StepSchedule(BaseModel):
    """t_n = theta / (n + offset)^alpha, or a constant t"""

    model_config = ConfigDict(frozen=True)

    kind: Literal["constant", "polynomial"] = "polynomial"
    theta: float = 1.0
    alpha: float = 1.0
    offset: float = 0.0
    t_const: float = 0.0

    @classmethod
    def constant(cls, t: float) -> "StepSchedule":
        return cls(kind="constant", t_const=t)

    @classmethod
    def polynomial(cls, theta: float, alpha: float = 1.0, offset: float = 0.0) -> "StepSchedule":
        return cls(kind="polynomial", theta=theta, alpha=alpha, offset=offset)

    def step(self, n: int) -> float:
        if self.kind == "constant":
            return self.t_const
        return self.theta / (n + self.offset) ** self.alpha


class BatchSchedule(BaseModel):
    """Samples per iteration m_n

    fixed: size; linear-growth: base + slope (n - 1); power: ceil(base n^exponent);
    stepped: base + increment floor(n / period).
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["fixed", "linear-growth", "power", "stepped"] = "fixed"
    base: int = Field(default=1, ge=1)
    slope: int = Field(default=1, ge=0)
    exponent: float = Field(default=2.0, gt=0)
    increment: int = Field(default=10, ge=0)
    period: int = Field(default=50, ge=1)

    @classmethod
    def estimator_rule(cls, base: int = 1, increment: int = 10, period: int = 50) -> "BatchSchedule":
        return cls(kind="stepped", base=base, increment=increment, period=period)

    def size(self, n: int) -> int:
        if self.kind == "linear-growth":
            m = self.base + self.slope * (n - 1)
        elif self.kind == "power":
            m = math.ceil(self.base * n ** self.exponent)
        elif self.kind == "stepped":
            m = self.base + self.increment * (n // self.period)
        else:
            m = self.base
        return max(1, int(m))

    @property
    def summable_inverse(self) -> bool:
        """Whether sum 1/m_n converges"""
        return self.kind == "power" and self.exponent > 1.0


ProxVariant = Literal["l1_box", "box_only", "l1_only", "none"]


@dataclass(frozen=True)
class ProxSpec:
    """h = lambda1 ||u||_L1 + indicator of the box, reduced according to variant"""

    lambda1: float = 0.0
    box: BoxSet = field(default_factory=BoxSet)
    variant: ProxVariant = "l1_box"

    def __post_init__(self):
        if self.lambda1 < 0:
            raise ValueError(f"lambda1 must be non-negative, got {self.lambda1}")

    @property
    def uses_l1(self) -> bool:
        return self.variant in ("l1_box", "l1_only")

    @property
    def uses_box(self) -> bool:
        return self.variant in ("l1_box", "box_only")

    def value(self, u: ControlField) -> float:
        """h(u), infinite outside the box"""
        if self.uses_box and not self.box.contains(u):
            return math.inf
        if not self.uses_l1:
            return 0.0
        return self.lambda1 * float(np.dot(u.space.weights, np.abs(u.values)))


@dataclass(frozen=True)
class GradientEvaluation:
    """A (batch mean) stochastic gradient plus what the caller knows about it

    bias_bound is the declared additive bias K_n; the loop only accumulates t_n K_n.
    """

    gradient: ControlField
    clamp_count: int = 0
    bias_bound: float = 0.0


@dataclass(frozen=True)
class MonitorSample:
    """Estimator output for one iterate"""

    f_hat: float
    r_n: float
    samples: int = 1
    clamp_count: int = 0


@dataclass
class IterationState:
    """Mutable state of a running loop: index n and iterate u_n"""

    n: int
    u: ControlField
    started_at: float = 0.0
