from dataclasses import dataclass
from typing import Tuple
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


XI_BOUND = math.sqrt(0.5)


class KLFieldSpec(BaseModel):
    """Truncated Karhunen-Loeve expansion mean + sum sqrt(lambda_i) phi_i xi_i"""

    model_config = ConfigDict(frozen=True)

    mean: float
    correlation_length: float = Field(gt=0)
    n_terms: int = Field(ge=1)
    eigenvalues: Tuple[float, ...]
    index_pairs: Tuple[Tuple[int, int], ...]

    @model_validator(mode="after")
    def check_eigenpairs(self) -> "KLFieldSpec":
        if len(self.eigenvalues) != self.n_terms or len(self.index_pairs) != self.n_terms:
            raise ValueError("Eigenpair count must equal n_terms")
        if any(value <= 0 for value in self.eigenvalues):
            raise ValueError("Eigenvalues must be strictly positive")
        if any(later > earlier for earlier, later in zip(self.eigenvalues, self.eigenvalues[1:])):
            raise ValueError("Eigenvalues must be sorted in descending order")
        return self


@dataclass(frozen=True, eq=False)
class SampleVector:
    """Uniform coordinates for both expansions, each in [-sqrt(0.5), sqrt(0.5)]"""

    xi_a: np.ndarray
    xi_r: np.ndarray

    def __post_init__(self):
        for name in ("xi_a", "xi_r"):
            values = np.array(getattr(self, name), dtype=float, copy=True)
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        if self.xi_a.shape != self.xi_r.shape:
            raise ValueError("xi_a and xi_r must have the same length")
        if np.any(np.abs(self.xi_a) > XI_BOUND) or np.any(np.abs(self.xi_r) > XI_BOUND):
            raise ValueError(f"Sample coordinates must lie in [-{XI_BOUND:.6f}, {XI_BOUND:.6f}]")

    @property
    def m(self) -> int:
        return self.xi_a.shape[0]

    @classmethod
    def zeros(cls, m: int) -> "SampleVector":
        return cls(np.zeros(m), np.zeros(m))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.xi_a, self.xi_r])
