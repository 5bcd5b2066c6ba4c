from functools import cached_property
from typing import Callable, Tuple, Union
import logging

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import cg, spsolve

from app.core.exceptions import LinearSolveError, MeshMismatchError
from app.schemas.fields import ControlField, StateField
from app.schemas.mesh import CoefficientSample, TriMesh
from app.schemas.records import NewtonReport
from app.utils.quadrature import DEGREE4

logger = logging.getLogger(__name__)

# A profile callable on (..., 2) points, or its precomputed degree-4 values
Profile = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def build_mesh(n_divisions: int) -> TriMesh:
    """N x N squares, each split along its bottom-left to top-right diagonal"""
    if n_divisions < 1:
        raise ValueError(f"n_divisions must be at least 1, got {n_divisions}")

    n = n_divisions
    grid = np.linspace(0.0, 1.0, n + 1)
    xs, ys = np.meshgrid(grid, grid, indexing="xy")
    vertices = np.column_stack([xs.ravel(), ys.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (i + j * (n + 1)).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ix = np.tile(np.arange(n + 1), n + 1)
    iy = np.repeat(np.arange(n + 1), n + 1)
    boundary_mask = (ix == 0) | (ix == n) | (iy == 0) | (iy == n)

    areas = np.full(triangles.shape[0], 1.0 / (2.0 * n * n))
    mesh = TriMesh(n, vertices, triangles, boundary_mask, areas)
    logger.debug(f"Built mesh {mesh.mesh_id}: {mesh.n_triangles} triangles, h={mesh.h_hat:.3e}")
    return mesh


def project_p1_to_p0(mesh: TriMesh, v: StateField) -> ControlField:
    """Cellwise mean of a P1 field, which is the average of its three vertex values"""
    if v.mesh_id != mesh.mesh_id:
        raise MeshMismatchError(f"{v.mesh_id} vs {mesh.mesh_id}")
    return ControlField(v.values[mesh.triangles].mean(axis=1), mesh.control_space)


def project_profile_to_p0(mesh: TriMesh, profile: Profile) -> ControlField:
    """L2 projection of an analytic function onto P0 with the degree-4 rule"""
    values = profile_at_quadrature(mesh, profile)
    return ControlField(values @ DEGREE4.weights, mesh.control_space)


def l2_norm_p1(v: StateField) -> float:
    mesh = v.mesh
    vq = DEGREE4.interpolate(v.values[mesh.triangles])
    return float(np.sqrt(np.dot(mesh.areas, (vq ** 2) @ DEGREE4.weights)))


def l2_distance_to_profile(v: StateField, profile: Profile) -> float:
    """||v - profile||_L2 with the degree-4 rule"""
    mesh = v.mesh
    vq = DEGREE4.interpolate(v.values[mesh.triangles])
    diff = vq - profile_at_quadrature(mesh, profile)
    return float(np.sqrt(np.dot(mesh.areas, (diff ** 2) @ DEGREE4.weights)))


def profile_l2_norm(mesh: TriMesh, profile: Profile) -> float:
    values = profile_at_quadrature(mesh, profile)
    return float(np.sqrt(np.dot(mesh.areas, (values ** 2) @ DEGREE4.weights)))


def profile_at_quadrature(mesh: TriMesh, profile: Profile) -> np.ndarray:
    """Profile values at the degree-4 points, (n_triangles, 6)"""
    if callable(profile):
        return profile(mesh.degree4_points)
    values = np.asarray(profile, dtype=float)
    if values.shape != (mesh.n_triangles, DEGREE4.n_points):
        raise ValueError(f"Profile values have shape {values.shape}, expected {(mesh.n_triangles, DEGREE4.n_points)}")
    return values


class FemSolver:
    """P1 assembly and solvers for -div(a grad y) + r y^3 = u with y = 0 on the boundary"""

    def __init__(
        self,
        mesh: TriMesh,
        newton_tol: float = 1e-10,
        max_newton_iters: int = 30,
        linear_solver: str = "direct",
        cg_rtol: float = 1e-12,
    ):
        self.mesh = mesh
        self.newton_tol = newton_tol
        self.max_newton_iters = max_newton_iters
        self.linear_solver = linear_solver
        self.cg_rtol = cg_rtol

    @cached_property
    def _gradient_products(self) -> np.ndarray:
        """|T| grad(phi_i) . grad(phi_j), (n_triangles, 3, 3)"""
        grads = self.mesh.basis_gradients
        return self.mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)

    @property
    def n_free(self) -> int:
        return self.mesh.free_vertices.size

    # Assembly

    def _assemble_matrix(self, local: np.ndarray) -> csc_matrix:
        rows, cols, mask = self.mesh.local_pairs
        return coo_matrix(
            (local[mask], (rows[mask], cols[mask])), shape=(self.n_free, self.n_free)
        ).tocsc()

    def _assemble_vector(self, local: np.ndarray) -> np.ndarray:
        index = self.mesh.free_index[self.mesh.triangles]
        mask = index >= 0
        return np.bincount(index[mask], weights=local[mask], minlength=self.n_free)

    def stiffness(self, coeffs: CoefficientSample) -> csc_matrix:
        a_mean = coeffs.a_values.mean(axis=1)
        return self._assemble_matrix(a_mean[:, None, None] * self._gradient_products)

    def mass(self) -> csc_matrix:
        local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
        return self._assemble_matrix(self.mesh.areas[:, None, None] * local[None, :, :])

    def load(self, u: ControlField) -> np.ndarray:
        if u.mesh_id != self.mesh.mesh_id:
            raise MeshMismatchError(f"{u.mesh_id} vs {self.mesh.mesh_id}")
        local = np.repeat((u.values * self.mesh.areas / 3.0)[:, None], 3, axis=1)
        return self._assemble_vector(local)

    def _reaction(self, y_full: np.ndarray, coeffs: CoefficientSample):
        """Residual of r y^3 v and its Jacobian 3 r y^2 phi_i phi_j with the degree-4 rule"""
        yq = DEGREE4.interpolate(y_full[self.mesh.triangles])
        weighted = DEGREE4.weights[None, :] * coeffs.r_values
        areas = self.mesh.areas
        residual = self._assemble_vector(areas[:, None] * ((weighted * yq ** 3) @ DEGREE4.barycentric))
        local = np.einsum(
            "tq,qi,qj->tij", 3.0 * weighted * yq ** 2, DEGREE4.barycentric, DEGREE4.barycentric
        )
        return residual, self._assemble_matrix(areas[:, None, None] * local)

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        full = np.zeros(self.mesh.n_vertices)
        full[self.mesh.free_vertices] = reduced
        return full

    # Solvers

    def _linear_solve(self, matrix: csc_matrix, rhs: np.ndarray) -> np.ndarray:
        if rhs.size == 0:
            return rhs.copy()
        if self.linear_solver == "cg":
            try:
                solution, info = cg(matrix, rhs, rtol=self.cg_rtol, atol=0.0, maxiter=10 * rhs.size)
            except TypeError:
                # scipy < 1.12 names it tol
                solution, info = cg(matrix, rhs, tol=self.cg_rtol, atol=0.0, maxiter=10 * rhs.size)
            if info != 0:
                raise LinearSolveError(f"Conjugate gradient stopped with info={info}")
        else:
            solution = np.atleast_1d(spsolve(matrix, rhs))
        if not np.all(np.isfinite(solution)):
            raise LinearSolveError("Linear solve produced non-finite values (singular or indefinite system)")
        return solution

    def solve_state(self, coeffs: CoefficientSample, u: ControlField) -> Tuple[StateField, NewtonReport]:
        """Undamped Newton from y = 0 on the reduced (interior) system

        Iterations count residual evaluations, so a zero control converges in one.
        """
        stiffness = self.stiffness(coeffs)
        rhs = self.load(u)
        y = np.zeros(self.n_free)
        history = []

        for _ in range(self.max_newton_iters):
            reaction, jacobian = self._reaction(self.expand(y), coeffs)
            residual = stiffness @ y + reaction - rhs
            norm = float(np.linalg.norm(residual))
            history.append(norm)
            logger.debug(f"Newton iteration {len(history)}: residual {norm:.3e}")
            if norm <= self.newton_tol or len(history) == self.max_newton_iters:
                break
            y = y + self._linear_solve((stiffness + jacobian).tocsc(), -residual)

        converged = history[-1] <= self.newton_tol
        report = NewtonReport(
            iterations=len(history),
            final_residual_norm=history[-1],
            converged=converged,
            residual_history=history,
        )
        if not converged:
            logger.warning(
                f"Newton did not converge in {self.max_newton_iters} iterations "
                f"(residual {history[-1]:.3e})"
            )
        return StateField(self.expand(y), self.mesh), report

    def residual_norm(self, coeffs: CoefficientSample, u: ControlField, y: StateField) -> float:
        """Algebraic residual of the state equation at y, in the norm Newton reports"""
        if y.mesh_id != self.mesh.mesh_id:
            raise MeshMismatchError(f"{y.mesh_id} vs {self.mesh.mesh_id}")
        reaction, _ = self._reaction(y.values, coeffs)
        residual = self.stiffness(coeffs) @ y.values[self.mesh.free_vertices] + reaction - self.load(u)
        return float(np.linalg.norm(residual))

    def solve_adjoint(self, coeffs: CoefficientSample, y: StateField, y_d: Profile) -> StateField:
        """Solve (a grad p, grad v) + (3 r y^2 p, v) = (y_D - y, v)"""
        if y.mesh_id != self.mesh.mesh_id:
            raise MeshMismatchError(f"{y.mesh_id} vs {self.mesh.mesh_id}")
        _, jacobian = self._reaction(y.values, coeffs)
        yq = DEGREE4.interpolate(y.values[self.mesh.triangles])
        source = DEGREE4.weights[None, :] * (profile_at_quadrature(self.mesh, y_d) - yq)
        rhs = self._assemble_vector(self.mesh.areas[:, None] * (source @ DEGREE4.barycentric))
        p = self._linear_solve((self.stiffness(coeffs) + jacobian).tocsc(), rhs)
        return StateField(self.expand(p), self.mesh)
