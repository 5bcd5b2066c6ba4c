from functools import lru_cache
from typing import Optional

from app.core.config import Settings, settings as default_settings
from app.repositories.csv_repository import CsvRepository
from app.schemas.algorithms import StepSchedule
from app.schemas.fields import BoxSet, ControlField
from app.schemas.mesh import TriMesh
from app.schemas.problem import EstimatorConfig, ProblemSpec
from app.services.fem_service import FemSolver, build_mesh, project_profile_to_p0
from app.services.problem_service import SemilinearProblem
from app.services.random_field_service import build_spec
from app.utils.expressions import AnalyticProfile


# Discretization
@lru_cache(maxsize=8)
def get_mesh(n_divisions: int) -> TriMesh:
    return build_mesh(n_divisions)


def get_solver(config: Settings = default_settings, mesh: Optional[TriMesh] = None) -> FemSolver:
    return FemSolver(
        mesh or get_mesh(config.mesh_n),
        newton_tol=config.newton_tol,
        max_newton_iters=config.max_newton_iters,
        linear_solver=config.linear_solver,
        cg_rtol=config.cg_rtol,
    )


# Problem
def get_problem_spec(config: Settings = default_settings, mesh: Optional[TriMesh] = None) -> ProblemSpec:
    return ProblemSpec(
        mesh=mesh or get_mesh(config.mesh_n),
        a_spec=build_spec(config.a_mean, config.correlation_length, config.kl_terms),
        r_spec=build_spec(config.r_mean, config.correlation_length, config.kl_terms),
        y_d=AnalyticProfile(config.target_expression),
        lambda1=config.lambda1,
        lambda2=config.lambda2,
        box=BoxSet(config.box_lower, config.box_upper),
        a_floor=config.a_floor,
    )


def get_estimator_config(config: Settings = default_settings) -> EstimatorConfig:
    return EstimatorConfig(
        base=config.estimator_base,
        increment=config.estimator_increment,
        period=config.estimator_period,
        window=config.window,
        tol=config.tol,
    )


def get_problem(config: Settings = default_settings, gradient_fault: float = 0.0) -> SemilinearProblem:
    spec = get_problem_spec(config)
    return SemilinearProblem(
        spec,
        get_solver(config, spec.mesh),
        seed=config.seed,
        substream=config.substream,
        workers=config.workers,
        estimators=get_estimator_config(config),
        gradient_fault=gradient_fault,
    )


def get_initial_control(config: Settings, mesh: TriMesh) -> ControlField:
    return project_profile_to_p0(mesh, AnalyticProfile(config.initial_control))


def get_step_schedule(config: Settings = default_settings, theta: Optional[float] = None) -> StepSchedule:
    return StepSchedule.polynomial(theta if theta is not None else config.theta, alpha=config.step_alpha)


# Persistence
def get_csv_repository(output_path: str) -> CsvRepository:
    return CsvRepository(output_path)
