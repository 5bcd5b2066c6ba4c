from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Union
import numpy as np

from app.core.exceptions import MeshMismatchError

if TYPE_CHECKING:
    from app.schemas.mesh import TriMesh


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ControlSpace:
    """Piecewise-constant space: one coefficient per cell, weighted by cell measure"""

    space_id: str
    weights: np.ndarray

    def __post_init__(self):
        weights = _frozen_array(self.weights)
        if weights.ndim != 1 or np.any(weights <= 0):
            raise ValueError("Cell weights must be a positive vector")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def euclidean(cls, dim: int) -> "ControlSpace":
        """Unit weights, for plain R^d problems"""
        return cls(f"euclidean-{dim}", np.ones(dim))

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def zeros(self) -> "ControlField":
        return ControlField(np.zeros(self.dim), self)

    def constant(self, value: float) -> "ControlField":
        return ControlField(np.full(self.dim, float(value)), self)

    def field(self, values) -> "ControlField":
        return ControlField(values, self)


@dataclass(frozen=True, eq=False)
class ControlField:
    """Immutable P0 coefficient vector (the control u)"""

    values: np.ndarray
    space: ControlSpace

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.shape != (self.space.dim,):
            raise ValueError(f"Expected {self.space.dim} cell values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Control field contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def mesh_id(self) -> str:
        return self.space.space_id

    def _check(self, other: "ControlField") -> None:
        if other.space.space_id != self.space.space_id:
            raise MeshMismatchError(f"{self.mesh_id} vs {other.mesh_id}")

    def __add__(self, other: "ControlField") -> "ControlField":
        self._check(other)
        return ControlField(self.values + other.values, self.space)

    def __sub__(self, other: "ControlField") -> "ControlField":
        self._check(other)
        return ControlField(self.values - other.values, self.space)

    def __mul__(self, scalar: float) -> "ControlField":
        return ControlField(self.values * float(scalar), self.space)

    __rmul__ = __mul__

    def __neg__(self) -> "ControlField":
        return ControlField(-self.values, self.space)

    def with_values(self, values) -> "ControlField":
        return ControlField(values, self.space)


@dataclass(frozen=True, eq=False)
class StateField:
    """Immutable P1 nodal vector with homogeneous Dirichlet boundary (state y or adjoint p)"""

    values: np.ndarray
    mesh: "TriMesh"

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.shape != (self.mesh.n_vertices,):
            raise ValueError(f"Expected {self.mesh.n_vertices} vertex values, got shape {values.shape}")
        if np.any(values[self.mesh.boundary_mask] != 0.0):
            raise ValueError("State field must vanish on boundary vertices")
        object.__setattr__(self, "values", values)

    @property
    def mesh_id(self) -> str:
        return self.mesh.mesh_id


BoundValue = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class BoxSet:
    """Pointwise bounds lower <= u <= upper, scalars or per-cell vectors"""

    lower: BoundValue = field(default=-np.inf)
    upper: BoundValue = field(default=np.inf)

    def __post_init__(self):
        lower = self.lower if np.isscalar(self.lower) else _frozen_array(self.lower)
        upper = self.upper if np.isscalar(self.upper) else _frozen_array(self.upper)
        if np.any(np.asarray(lower) > np.asarray(upper)):
            raise ValueError("Box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def symmetric(cls, bound: float) -> "BoxSet":
        return cls(-abs(bound), abs(bound))

    def clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lower, self.upper)

    def contains(self, u: ControlField) -> bool:
        return bool(np.all(u.values >= self.lower) and np.all(u.values <= self.upper))
