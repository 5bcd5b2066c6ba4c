from dataclasses import dataclass
from functools import cached_property
import numpy as np

from app.schemas.fields import ControlSpace
from app.utils.quadrature import DEGREE4, EDGE_MIDPOINT


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Uniform triangulation of the unit square with P0/P1 metadata"""

    n_divisions: int
    vertices: np.ndarray  # (n_vertices, 2)
    triangles: np.ndarray  # (n_triangles, 3), counter-clockwise
    boundary_mask: np.ndarray  # (n_vertices,)
    areas: np.ndarray  # (n_triangles,)

    @property
    def mesh_id(self) -> str:
        return f"unit-square-N{self.n_divisions}"

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def h_hat(self) -> float:
        """Largest triangle diameter (the diagonal of one grid square)"""
        return float(np.sqrt(2.0) / self.n_divisions)

    @cached_property
    def control_space(self) -> ControlSpace:
        return ControlSpace(self.mesh_id, self.areas)

    @cached_property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def midpoint_points(self) -> np.ndarray:
        return EDGE_MIDPOINT.physical_points(self.corners)

    @cached_property
    def degree4_points(self) -> np.ndarray:
        return DEGREE4.physical_points(self.corners)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric hat functions per triangle, (n_triangles, 3, 2)"""
        x = self.corners[:, :, 0]
        y = self.corners[:, :, 1]
        grads = np.empty((self.n_triangles, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            grads[:, i, 0] = y[:, j] - y[:, k]
            grads[:, i, 1] = x[:, k] - x[:, j]
        return grads / (2.0 * self.areas)[:, None, None]

    @cached_property
    def free_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def free_index(self) -> np.ndarray:
        """Vertex -> reduced unknown index, -1 on the boundary"""
        index = np.full(self.n_vertices, -1, dtype=np.int64)
        index[self.free_vertices] = np.arange(self.free_vertices.size)
        return index

    @cached_property
    def local_pairs(self):
        """Row/column reduced indices of every local 3x3 entry and the mask of free-free pairs"""
        local = self.free_index[self.triangles]
        rows = np.repeat(local[:, :, None], 3, axis=2)
        cols = np.repeat(local[:, None, :], 3, axis=1)
        mask = (rows >= 0) & (cols >= 0)
        return rows, cols, mask


@dataclass(frozen=True, eq=False)
class CoefficientSample:
    """Diffusion a at edge midpoints and reaction r at the degree-4 points of every triangle"""

    a_values: np.ndarray  # (n_triangles, 3)
    r_values: np.ndarray  # (n_triangles, 6)
    clamp_count: int = 0

    @classmethod
    def constant(cls, mesh: TriMesh, a: float, r: float) -> "CoefficientSample":
        return cls(
            np.full((mesh.n_triangles, EDGE_MIDPOINT.n_points), float(a)),
            np.full((mesh.n_triangles, DEGREE4.n_points), float(r)),
        )

    @property
    def a_min(self) -> float:
        return float(self.a_values.min())
