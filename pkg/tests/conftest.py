import numpy as np
import pytest

from app.core.config import Settings
from app.schemas.fields import BoxSet
from app.schemas.mesh import CoefficientSample
from app.schemas.problem import EstimatorConfig, ProblemSpec
from app.services.fem_service import FemSolver, build_mesh
from app.services.problem_service import SemilinearProblem
from app.services.random_field_service import build_spec
from app.utils.expressions import AnalyticProfile


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture(scope="session")
def mesh8():
    return build_mesh(8)


@pytest.fixture
def solver8(mesh8):
    return FemSolver(mesh8, newton_tol=1e-12)


@pytest.fixture
def unit_coefficients(mesh8):
    return CoefficientSample.constant(mesh8, 1.0, 0.0)


def make_problem(mesh, target="sin(2*pi*x1)*sin(2*pi*x2)*exp(2*x1)/6", lambda1=0.008, lambda2=0.001,
                 box=None, a_mean=0.5, r_mean=0.5, kl_terms=6, estimators=None, workers=1, seed=0):
    spec = ProblemSpec(
        mesh=mesh,
        a_spec=build_spec(a_mean, 0.5, kl_terms),
        r_spec=build_spec(r_mean, 0.5, kl_terms),
        y_d=AnalyticProfile(target) if isinstance(target, str) else target,
        lambda1=lambda1,
        lambda2=lambda2,
        box=box if box is not None else BoxSet(-0.5, 0.5),
    )
    return SemilinearProblem(
        spec,
        FemSolver(mesh, newton_tol=1e-12),
        seed=seed,
        workers=workers,
        estimators=estimators or EstimatorConfig(),
    )


@pytest.fixture
def problem8(mesh8):
    return make_problem(mesh8)


@pytest.fixture
def small_settings():
    """Default problem on a coarse mesh, isolated from any .env in the working directory"""
    return Settings(_env_file=None, mesh_n=4, n_max=60, kl_terms=6)


@pytest.fixture
def problem_factory():
    return make_problem
