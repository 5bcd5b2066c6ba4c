import math

import numpy as np
import pytest

from app.core.exceptions import MeshMismatchError
from app.schemas.fields import StateField
from app.schemas.mesh import CoefficientSample
from app.services.fem_service import (
    FemSolver,
    build_mesh,
    l2_distance_to_profile,
    l2_norm_p1,
    profile_l2_norm,
    project_p1_to_p0,
    project_profile_to_p0,
)
from app.schemas.problem import POINCARE_UNIT_SQUARE
from app.services.hilbert import inner_l2_p0, norm_l2_p0
from app.utils.expressions import AnalyticProfile
from app.utils.quadrature import DEGREE4


@pytest.mark.parametrize("n, triangles", [(20, 800), (30, 1800), (40, 3200), (50, 5000), (60, 7200), (70, 9800)])
def test_triangle_counts(n, triangles):
    mesh = build_mesh(n)
    assert mesh.n_triangles == triangles
    assert mesh.n_vertices == (n + 1) ** 2
    assert mesh.h_hat == pytest.approx(math.sqrt(2.0) / n)


def test_mesh_geometry(mesh8):
    assert mesh8.areas.sum() == pytest.approx(1.0)
    # counter-clockwise orientation
    c = mesh8.corners
    signed = 0.5 * ((c[:, 1, 0] - c[:, 0, 0]) * (c[:, 2, 1] - c[:, 0, 1])
                    - (c[:, 2, 0] - c[:, 0, 0]) * (c[:, 1, 1] - c[:, 0, 1]))
    assert np.allclose(signed, mesh8.areas)
    assert mesh8.boundary_mask.sum() == 4 * 8
    assert mesh8.free_vertices.size == 7 * 7


def test_build_mesh_rejects_empty_grid():
    with pytest.raises(ValueError):
        build_mesh(0)


def test_stiffness_is_symmetric_positive_definite(solver8, unit_coefficients):
    k = solver8.stiffness(unit_coefficients).toarray()
    assert np.allclose(k, k.T)
    assert np.all(np.linalg.eigvalsh(k) > 0)


def test_mass_matrix_integrates_products(mesh8, solver8):
    m = solver8.mass().toarray()
    assert np.allclose(m, m.T)
    rng = np.random.default_rng(3)
    values = rng.normal(size=solver8.n_free)
    y = StateField(solver8.expand(values), mesh8)
    assert values @ m @ values == pytest.approx(l2_norm_p1(y) ** 2, rel=1e-12)


def test_zero_control_gives_zero_state_in_one_iteration(mesh8, solver8):
    coeffs = CoefficientSample.constant(mesh8, 0.5, 0.5)
    y, report = solver8.solve_state(coeffs, mesh8.control_space.zeros())
    assert np.all(y.values == 0.0)
    assert report.iterations == 1
    assert report.converged


def test_newton_solves_the_cubic_problem(mesh8, solver8):
    coeffs = CoefficientSample.constant(mesh8, 0.5, 5.0)
    u = mesh8.control_space.constant(20.0)
    y, report = solver8.solve_state(coeffs, u)
    assert report.converged
    assert report.final_residual_norm <= 1e-12
    # reaction damps the linear response
    y_linear, _ = solver8.solve_state(CoefficientSample.constant(mesh8, 0.5, 0.0), u)
    assert y.values.max() < y_linear.values.max()


def test_newton_failure_is_reported_not_raised(mesh8):
    solver = FemSolver(mesh8, max_newton_iters=1)
    _, report = solver.solve_state(CoefficientSample.constant(mesh8, 0.5, 0.5), mesh8.control_space.constant(1.0))
    assert not report.converged
    assert report.iterations == 1


def test_cg_matches_direct(mesh8):
    coeffs = CoefficientSample.constant(mesh8, 0.7, 1.0)
    u = mesh8.control_space.constant(3.0)
    y_direct, _ = FemSolver(mesh8).solve_state(coeffs, u)
    y_cg, _ = FemSolver(mesh8, linear_solver="cg").solve_state(coeffs, u)
    assert np.allclose(y_direct.values, y_cg.values, atol=1e-10)


def test_manufactured_poisson_converges_at_second_order():
    exact = AnalyticProfile("sin(pi*x1)*sin(pi*x2)")
    source = AnalyticProfile("2*pi**2*sin(pi*x1)*sin(pi*x2)")
    errors = []
    for n in (16, 32, 64):
        mesh = build_mesh(n)
        y, _ = FemSolver(mesh).solve_state(CoefficientSample.constant(mesh, 1.0, 0.0), project_profile_to_p0(mesh, source))
        errors.append(l2_distance_to_profile(y, exact))
    assert 3.4 <= errors[0] / errors[1] <= 4.6
    assert 3.4 <= errors[1] / errors[2] <= 4.6


def test_adjoint_at_zero_state_matches_linear_state_solve(mesh8, solver8, unit_coefficients):
    """With y = 0 and r = 0 the adjoint source y_D = c is the same load as a control u = c"""
    zero_state = StateField(np.zeros(mesh8.n_vertices), mesh8)
    p = solver8.solve_adjoint(unit_coefficients, zero_state, AnalyticProfile("2"))
    y, _ = solver8.solve_state(unit_coefficients, mesh8.control_space.constant(2.0))
    assert np.allclose(p.values, y.values, atol=1e-13)
    assert p.values.max() > 0


def test_projections(mesh8):
    u = project_profile_to_p0(mesh8, AnalyticProfile("3"))
    assert np.allclose(u.values, 3.0)
    linear = AnalyticProfile("x1 + 2*x2")
    u = project_profile_to_p0(mesh8, linear)
    assert np.allclose(u.values, linear(mesh8.centroids))
    assert profile_l2_norm(mesh8, AnalyticProfile("1")) == pytest.approx(1.0)


def test_p1_to_p0_is_vertex_average(mesh8, solver8):
    coeffs = CoefficientSample.constant(mesh8, 1.0, 0.0)
    y, _ = solver8.solve_state(coeffs, mesh8.control_space.constant(1.0))
    u = project_p1_to_p0(mesh8, y)
    assert np.allclose(u.values, y.values[mesh8.triangles].mean(axis=1))
    with pytest.raises(MeshMismatchError):
        project_p1_to_p0(build_mesh(3), y)


def test_newton_stops_without_a_trailing_update(mesh8):
    coeffs = CoefficientSample.constant(mesh8, 0.5, 50.0)
    u = mesh8.control_space.constant(200.0)
    for cap in (1, 2, 3):
        solver = FemSolver(mesh8, max_newton_iters=cap)
        y, report = solver.solve_state(coeffs, u)
        assert report.iterations == cap
        assert solver.residual_norm(coeffs, u, y) == pytest.approx(report.final_residual_norm, rel=1e-10)


def test_newton_residuals_decrease_strictly(mesh8, problem_factory, rng):
    problem = problem_factory(mesh8)
    solver = FemSolver(mesh8)
    space = mesh8.control_space
    for index in range(100):
        coeffs = problem.coefficients(problem.draw(index))
        _, report = solver.solve_state(coeffs, space.field(rng.uniform(-0.5, 0.5, space.dim)))
        assert report.converged
        history = report.residual_history
        assert all(later < earlier for earlier, later in zip(history, history[1:]))


def test_state_is_stable_in_the_control(mesh8, problem_factory, rng):
    problem = problem_factory(mesh8)
    solver = FemSolver(mesh8, newton_tol=1e-13)
    space = mesh8.control_space
    for index in range(20):
        coeffs = problem.coefficients(problem.draw(index))
        u1 = space.field(rng.uniform(-0.5, 0.5, space.dim))
        u2 = space.field(rng.uniform(-0.5, 0.5, space.dim))
        y1, _ = solver.solve_state(coeffs, u1)
        y2, _ = solver.solve_state(coeffs, u2)
        gap = l2_norm_p1(StateField(y1.values - y2.values, mesh8))
        c1 = POINCARE_UNIT_SQUARE ** 2 / coeffs.a_min
        assert gap <= c1 * norm_l2_p0(u1 - u2) * (1 + 1e-8)


def test_unit_coefficients_state_bound(mesh8, solver8):
    y, report = solver8.solve_state(CoefficientSample.constant(mesh8, 1.0, 1.0), mesh8.control_space.constant(1.0))
    assert report.converged
    assert 0.0 < l2_norm_p1(y) <= POINCARE_UNIT_SQUARE ** 2


def test_p1_to_p0_projection_is_adjoint_to_embedding(mesh8, rng):
    interior = mesh8.free_vertices
    for _ in range(10):
        values = np.zeros(mesh8.n_vertices)
        values[interior] = rng.normal(size=interior.size)
        v = StateField(values, mesh8)
        w = mesh8.control_space.field(rng.normal(size=mesh8.n_triangles))
        integral = np.dot(mesh8.areas * w.values, DEGREE4.interpolate(values[mesh8.triangles]) @ DEGREE4.weights)
        assert inner_l2_p0(project_p1_to_p0(mesh8, v), w) == pytest.approx(integral, rel=1e-12, abs=1e-15)
