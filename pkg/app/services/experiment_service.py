from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence
import logging

import numpy as np
from scipy.optimize import minimize_scalar

from app.core.config import Settings
from app.core.dependencies import (
    get_csv_repository,
    get_initial_control,
    get_mesh,
    get_problem,
    get_step_schedule,
)
from app.core.exceptions import ConfigurationError, IterationError, SolverError
from app.schemas.algorithms import ProxSpec
from app.schemas.fields import BoxSet, ControlField, ControlSpace
from app.schemas.records import (
    GradientCheckReport,
    GradientTrial,
    ProxCheckReport,
    RunRecord,
    RunSummary,
    SweepRow,
)
from app.services.hilbert import inner_l2_p0, max_abs, norm_l2_p0
from app.services.optimizer_service import WindowedStationarity, run_spg_decreasing
from app.services.problem_service import SemilinearProblem
from app.services.prox_service import prox_l1_box
from app.services.random_field_service import (
    LANE_FIELD_DUMP,
    LANE_GRADIENT_CHECK,
    LANE_PATH,
    LANE_PROX_CHECK,
    evaluate_field,
    lane_generator,
)

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-4
PROX_TOLERANCE = 1e-6
EPSILON_SWEEP = (1e-4, 1e-5, 1e-6)


@dataclass
class RunOutcome:
    record: RunRecord
    summary: RunSummary
    theta: float


def resolve_theta(problem: SemilinearProblem, u1: ControlField) -> float:
    """theta = 1 / ||G(u1, xi_1)|| with the first path sample"""
    norm = norm_l2_p0(problem.stochastic_gradient(u1, problem.draw(1, LANE_PATH)))
    if norm == 0.0:
        raise ConfigurationError("Cannot scale theta: initial stochastic gradient vanishes")
    return 1.0 / norm


def _sweep_row(payload: Dict) -> SweepRow:
    """Module-level so process pools can pickle it"""
    config = Settings(_env_file=None, **payload)
    try:
        summary = ExperimentService(config).solve().summary
    except (SolverError, IterationError) as e:
        logger.error(f"Sweep N={config.mesh_n} failed: {e}")
        mesh = get_mesh(config.mesh_n)
        return SweepRow(
            mesh_n=config.mesh_n,
            h_hat=mesh.h_hat,
            n_triangles=mesh.n_triangles,
            n_iters=e.iteration if isinstance(e, IterationError) else 0,
            terminated=False,
            error=str(e),
        )
    logger.info(
        f"Sweep N={config.mesh_n}: {summary.n_triangles} triangles, "
        f"f_hat={summary.f_hat_final}, {summary.n_iters} iterations"
    )
    return SweepRow(
        mesh_n=config.mesh_n,
        h_hat=summary.h_hat,
        n_triangles=summary.n_triangles,
        f_hat=summary.f_hat_final,
        n_iters=summary.n_iters,
        terminated=summary.terminated,
    )


class ExperimentService:
    """Drivers for the solve run, the mesh sweep and the numerical checks"""

    def __init__(self, config: Settings):
        self.config = config

    def solve(self, output_path: Optional[str] = None) -> RunOutcome:
        """Decreasing-step proximal run with estimators and windowed termination"""
        config = self.config
        problem = get_problem(config)
        mesh = problem.mesh
        u1 = get_initial_control(config, mesh)

        theta = resolve_theta(problem, u1) if config.theta_auto else config.theta
        logger.info(
            f"Solving on {mesh.mesh_id} ({mesh.n_triangles} triangles), theta={theta:.6g}, "
            f"seed={config.seed}, substream={config.substream}"
        )
        repository = get_csv_repository(output_path) if output_path else None
        try:
            record = run_spg_decreasing(
                problem.gradient_callback,
                get_step_schedule(config, theta),
                problem.spec.prox,
                u1,
                n_max=config.n_max,
                termination=WindowedStationarity(config.tol, config.window, config.termination_rule),
                monitor=problem.monitor,
                window=config.window,
                record_wall_time=config.record_wall_time,
            )
        except IterationError as e:
            logger.error(f"Run failed at iteration {e.iteration}: {e.cause}")
            if repository is not None and e.record is not None:
                repository.write_run(e.record, partial=True)
            raise

        summary = record.summary(
            max_abs_control=max_abs(record.control),
            mesh_n=mesh.n_divisions,
            n_triangles=mesh.n_triangles,
            h_hat=mesh.h_hat,
            seed=config.seed,
            substream=config.substream,
        )
        logger.info(
            f"Finished after {summary.n_iters} iterations ({summary.reason}), "
            f"f_hat={summary.f_hat_final}, max |u|={summary.max_abs_control:.6g}"
        )
        if summary.total_clamp_count:
            logger.warning(f"Clamped {summary.total_clamp_count} coefficient values over the run")

        if repository is not None:
            repository.write_run(record)
            repository.write_summary(summary)
            repository.write_cells(mesh, {"u": record.control}, repository.control_path())

        if record.n_iters > 0:
            try:
                problem.bound_diagnostics(record.control, problem.draw(record.n_iters, LANE_PATH))
            except SolverError as e:
                logger.warning(f"Skipped a-priori bound diagnostics: {e}")
        return RunOutcome(record, summary, theta)

    def sweep_mesh(self, meshes: Sequence[int], output_path: Optional[str] = None) -> List[SweepRow]:
        """One solve per mesh, same seed, substream = N"""
        if not meshes or any(n < 1 for n in meshes):
            raise ConfigurationError(f"Invalid mesh list: {list(meshes)}")

        base = self.config.model_dump()
        payloads = [{**base, "mesh_n": n, "substream": n} for n in meshes]
        workers = min(self.config.sweep_workers, len(payloads))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_sweep_row, payloads))
        else:
            rows = [_sweep_row(payload) for payload in payloads]

        if output_path:
            get_csv_repository(output_path).write_sweep(rows)
        failed = [row.mesh_n for row in rows if row.error is not None]
        if failed:
            raise SolverError(f"Sweep rows failed for N={failed}")
        return rows

    def check_gradient(self, trials: int = 10, epsilon: float = 1e-5, fault: bool = False) -> GradientCheckReport:
        """Central differences of J(., xi) against <G(u, xi), v> for random (u, v, xi)"""
        if trials < 1:
            raise ConfigurationError(f"trials must be at least 1, got {trials}")

        # Newton must resolve J far below epsilon * <G, v>
        config = self.config.model_copy(update={"newton_tol": min(self.config.newton_tol, 1e-12)})
        problem = get_problem(config, gradient_fault=1.0 if fault else 0.0)
        if fault:
            logger.warning("Fault injection: lambda2 + 1 used in the gradient only")
        space = problem.mesh.control_space
        rng = lane_generator(config.seed, LANE_GRADIENT_CHECK, config.substream)

        results = []
        triples = []
        for trial in range(trials):
            u = space.field(rng.uniform(config.box_lower, config.box_upper, space.dim))
            v = space.field(rng.uniform(-1.0, 1.0, space.dim))
            xi = problem.draw(trial, LANE_GRADIENT_CHECK)
            triples.append((u, v, xi))
            results.append(self._gradient_trial(problem, u, v, xi, trial, epsilon))

        u, v, xi = triples[0]
        sweep = [self._gradient_trial(problem, u, v, xi, 0, eps) for eps in EPSILON_SWEEP]
        worst = max(result.relative_error for result in results)
        logger.info(f"Gradient check: worst relative error {worst:.3e} over {trials} trials")
        return GradientCheckReport(
            trials=results,
            worst_relative_error=worst,
            threshold=GRADIENT_TOLERANCE,
            epsilon_sweep=sweep,
        )

    @staticmethod
    def _gradient_trial(problem, u, v, xi, trial: int, epsilon: float) -> GradientTrial:
        j_plus = problem.objective_sample(u + epsilon * v, xi)
        j_minus = problem.objective_sample(u - epsilon * v, xi)
        finite_difference = (j_plus - j_minus) / (2.0 * epsilon)
        adjoint = inner_l2_p0(problem.stochastic_gradient(u, xi), v)
        scale = max(abs(finite_difference), abs(adjoint), 1e-300)
        return GradientTrial(
            trial=trial,
            epsilon=epsilon,
            finite_difference=finite_difference,
            adjoint=adjoint,
            relative_error=abs(finite_difference - adjoint) / scale,
        )

    def check_prox(self, pairs: int = 1000) -> ProxCheckReport:
        """Closed-form prox against bounded scalar minimization of lambda1 |v| + (v - z)^2 / 2t"""
        lam = self.config.lambda1
        lower, upper = self.config.box_lower, self.config.box_upper
        prox = ProxSpec(lambda1=lam, box=BoxSet(lower, upper))
        scalar_space = ControlSpace.euclidean(1)
        rng = lane_generator(self.config.seed, LANE_PROX_CHECK)

        worst = 0.0
        for _ in range(pairs):
            z = float(rng.uniform(-2.0, 2.0))
            t = float(rng.uniform(0.01, 10.0))
            closed = prox_l1_box(scalar_space.field([z]), t, prox).values[0]
            brute = minimize_scalar(
                lambda x: lam * abs(x) + (x - z) ** 2 / (2.0 * t),
                bounds=(lower, upper),
                method="bounded",
                options={"xatol": 1e-10},
            ).x
            worst = max(worst, abs(closed - brute))

        logger.info(f"Prox check: worst absolute error {worst:.3e} over {pairs} pairs")
        return ProxCheckReport(pairs=pairs, worst_abs_error=worst, threshold=PROX_TOLERANCE)

    def sample_field(self, index: int = 0, output_path: Optional[str] = None) -> Dict[str, ControlField]:
        """Clamped a and r at triangle centroids for one field-dump sample"""
        problem = get_problem(self.config)
        mesh = problem.mesh
        xi = problem.draw(index, LANE_FIELD_DUMP)
        a = evaluate_field(problem.spec.a_spec, xi.xi_a, mesh.centroids)
        r = evaluate_field(problem.spec.r_spec, xi.xi_r, mesh.centroids)
        columns = {
            "a": mesh.control_space.field(np.maximum(a, problem.spec.a_floor)),
            "r": mesh.control_space.field(np.maximum(r, 0.0)),
        }
        logger.info(
            f"Sampled field {index}: a in [{a.min():.4f}, {a.max():.4f}], r in [{r.min():.4f}, {r.max():.4f}]"
        )
        if output_path:
            get_csv_repository(output_path).write_cells(mesh, columns)
        return columns
