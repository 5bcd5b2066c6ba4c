from dataclasses import dataclass
import numpy as np


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Quadrature rule on the reference triangle in barycentric coordinates

    Weights sum to one; multiply by the triangle area to integrate.
    """

    name: str
    degree: int
    barycentric: np.ndarray  # (n_points, 3)
    weights: np.ndarray  # (n_points,)

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]

    def physical_points(self, corners: np.ndarray) -> np.ndarray:
        """Map rule points onto every triangle, corners is (n_triangles, 3, 2)"""
        return np.einsum("qi,tid->tqd", self.barycentric, corners)

    def interpolate(self, nodal: np.ndarray) -> np.ndarray:
        """Evaluate P1 fields given per-triangle vertex values (n_triangles, 3)"""
        return nodal @ self.barycentric.T


def _edge_midpoint_rule() -> TriangleRule:
    barycentric = np.array([
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ])
    return TriangleRule("edge-midpoint", 2, barycentric, np.full(3, 1.0 / 3.0))


def _dunavant_degree4_rule() -> TriangleRule:
    a, b = 0.445948490915965, 0.108103018168070
    c, d = 0.091576213509771, 0.816847572980459
    barycentric = np.array([
        [b, a, a],
        [a, b, a],
        [a, a, b],
        [d, c, c],
        [c, d, c],
        [c, c, d],
    ])
    weights = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
    return TriangleRule("dunavant-6", 4, barycentric, weights)


# Exact for the stiffness and mass terms
EDGE_MIDPOINT = _edge_midpoint_rule()
# Exact for y^3 v and 3 y^2 p v with P1 fields
DEGREE4 = _dunavant_degree4_rule()
