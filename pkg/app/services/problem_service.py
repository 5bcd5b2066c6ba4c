from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar
import logging

import numpy as np

from app.core.exceptions import NewtonConvergenceError
from app.schemas.algorithms import GradientEvaluation, MonitorSample
from app.schemas.fields import ControlField, StateField
from app.schemas.mesh import CoefficientSample
from app.schemas.problem import POINCARE_UNIT_SQUARE, BoundReport, EstimatorConfig, ProblemSpec
from app.schemas.random_field import SampleVector
from app.services.fem_service import (
    FemSolver,
    l2_distance_to_profile,
    l2_norm_p1,
    profile_at_quadrature,
    profile_l2_norm,
    project_p1_to_p0,
)
from app.services.hilbert import norm_l1_p0, norm_l2_p0
from app.services.prox_service import stationarity_measure
from app.services.random_field_service import (
    BATCH_STRIDE,
    LANE_BATCH,
    LANE_ESTIMATOR,
    LANE_PATH,
    draw_sample,
    sample_coefficients,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class SampleSolution:
    """Everything one sample xi yields at a control u"""

    objective: float
    gradient: ControlField
    clamp_count: int


class SemilinearProblem:
    """Objective, stochastic gradient and Monte Carlo estimators of the random semilinear control problem"""

    def __init__(
        self,
        spec: ProblemSpec,
        solver: FemSolver,
        seed: int = 0,
        substream: int = 0,
        workers: int = 1,
        estimators: Optional[EstimatorConfig] = None,
        gradient_fault: float = 0.0,
    ):
        if solver.mesh is not spec.mesh:
            raise ValueError("Solver and problem must share one mesh")
        self.spec = spec
        self.solver = solver
        self.seed = seed
        self.substream = substream
        self.workers = workers
        self.estimators = estimators or EstimatorConfig()
        # added to lambda2 in G only, to check that the gradient test catches it
        self.gradient_fault = gradient_fault
        self._y_d = profile_at_quadrature(spec.mesh, spec.y_d)

    @property
    def mesh(self):
        return self.spec.mesh

    # Sampling

    def draw(self, index: int, lane: int = LANE_PATH) -> SampleVector:
        return draw_sample(self.seed, index, self.spec.kl_terms, lane=lane, substream=self.substream)

    def draw_batch(self, n: int, size: int, lane: int) -> List[SampleVector]:
        """size samples for iteration n, disjoint from every other iteration"""
        return [self.draw(n * BATCH_STRIDE + j, lane) for j in range(size)]

    def coefficients(self, xi: SampleVector) -> CoefficientSample:
        return sample_coefficients(self.mesh, self.spec.a_spec, self.spec.r_spec, xi, a_floor=self.spec.a_floor)

    def _map(self, function: Callable[[SampleVector], T], samples: Sequence[SampleVector]) -> List[T]:
        """Apply per sample, results in input order"""
        if self.workers > 1 and len(samples) > 1:
            with ThreadPoolExecutor(max_workers=min(self.workers, len(samples))) as pool:
                return list(pool.map(function, samples))
        return [function(xi) for xi in samples]

    # Per-sample quantities

    def state(self, u: ControlField, coeffs: CoefficientSample) -> StateField:
        y, report = self.solver.solve_state(coeffs, u)
        if not report.converged:
            raise NewtonConvergenceError(
                f"Newton failed after {report.iterations} iterations (residual {report.final_residual_norm:.3e})",
                report=report,
            )
        return y

    def _tracking(self, u: ControlField, y: StateField) -> float:
        return 0.5 * l2_distance_to_profile(y, self._y_d) ** 2 + 0.5 * self.spec.lambda2 * norm_l2_p0(u) ** 2

    def _gradient(self, u: ControlField, coeffs: CoefficientSample, y: StateField) -> ControlField:
        p = self.solver.solve_adjoint(coeffs, y, self._y_d)
        return (self.spec.lambda2 + self.gradient_fault) * u - project_p1_to_p0(self.mesh, p)

    def objective_sample(self, u: ControlField, xi: SampleVector) -> float:
        """J(u, xi) = 1/2 ||y - y_D||^2 + lambda2/2 ||u||^2"""
        coeffs = self.coefficients(xi)
        return self._tracking(u, self.state(u, coeffs))

    def stochastic_gradient(self, u: ControlField, xi: SampleVector) -> ControlField:
        """G(u, xi) = lambda2 u - P0(p)"""
        coeffs = self.coefficients(xi)
        return self._gradient(u, coeffs, self.state(u, coeffs))

    def solve_sample(self, u: ControlField, xi: SampleVector) -> SampleSolution:
        """One state and one adjoint solve, shared by J and G"""
        coeffs = self.coefficients(xi)
        y = self.state(u, coeffs)
        return SampleSolution(self._tracking(u, y), self._gradient(u, coeffs, y), coeffs.clamp_count)

    def sample_gradient(self, u: ControlField, xi: SampleVector) -> GradientEvaluation:
        coeffs = self.coefficients(xi)
        gradient = self._gradient(u, coeffs, self.state(u, coeffs))
        return GradientEvaluation(gradient, clamp_count=coeffs.clamp_count)

    def batch_gradient(self, u: ControlField, samples: Sequence[SampleVector]) -> GradientEvaluation:
        """Mean of G over samples, reduced in sample order"""
        evaluations = self._map(lambda xi: self.sample_gradient(u, xi), samples)
        mean = np.mean(np.stack([e.gradient.values for e in evaluations]), axis=0)
        clamped = sum(e.clamp_count for e in evaluations)
        return GradientEvaluation(u.with_values(mean), clamp_count=clamped)

    # Optimizer callbacks

    def gradient_callback(self, u: ControlField, n: int, batch_size: int) -> GradientEvaluation:
        """Single samples follow the path lane at index n, batches use the batch lane"""
        if batch_size == 1:
            return self.sample_gradient(u, self.draw(n, LANE_PATH))
        return self.batch_gradient(u, self.draw_batch(n, batch_size, LANE_BATCH))

    def monitor(self, u: ControlField, n: int) -> MonitorSample:
        """f_hat_n and r_n from the same m_n estimator samples"""
        m = self.estimators.samples(n)
        solutions = self._map(lambda xi: self.solve_sample(u, xi), self.draw_batch(n, m, LANE_ESTIMATOR))
        f_hat = float(np.mean([s.objective for s in solutions])) + self.spec.lambda1 * norm_l1_p0(u)
        g_avg = u.with_values(np.mean(np.stack([s.gradient.values for s in solutions]), axis=0))
        r_n = stationarity_measure(u, g_avg, self.spec.prox)
        return MonitorSample(
            f_hat=f_hat,
            r_n=r_n,
            samples=m,
            clamp_count=sum(s.clamp_count for s in solutions),
        )

    # Estimators

    def estimate_objective(self, u: ControlField, n: int) -> Tuple[float, int]:
        """(1/m_n) sum J(u, xi_j) + lambda1 ||u||_L1 over fresh estimator samples"""
        m = self.estimators.samples(n)
        values = self._map(lambda xi: self.objective_sample(u, xi), self.draw_batch(n, m, LANE_ESTIMATOR))
        return float(np.mean(values)) + self.spec.lambda1 * norm_l1_p0(u), m

    def estimate_stationarity(self, u: ControlField, n: int) -> float:
        m = self.estimators.samples(n)
        g_avg = self.batch_gradient(u, self.draw_batch(n, m, LANE_ESTIMATOR)).gradient
        return stationarity_measure(u, g_avg, self.spec.prox)

    # Diagnostics

    def bound_diagnostics(self, u: ControlField, xi: SampleVector) -> BoundReport:
        """Check ||y|| <= C1 ||u||, ||p|| <= C1 ||y - y_D|| and the G bound for one sample"""
        coeffs = self.coefficients(xi)
        y = self.state(u, coeffs)
        p = self.solver.solve_adjoint(coeffs, y, self._y_d)
        g = (self.spec.lambda2 + self.gradient_fault) * u - project_p1_to_p0(self.mesh, p)

        a_min = coeffs.a_min
        c1 = POINCARE_UNIT_SQUARE ** 2 / a_min
        u_norm = norm_l2_p0(u)
        report = BoundReport(
            a_min=a_min,
            c1=c1,
            state_norm=l2_norm_p1(y),
            state_bound=c1 * u_norm,
            adjoint_norm=l2_norm_p1(p),
            adjoint_bound=c1 * l2_distance_to_profile(y, self._y_d),
            gradient_norm=norm_l2_p0(g),
            gradient_bound=self.spec.lambda2 * u_norm + c1 * profile_l2_norm(self.mesh, self._y_d) + c1 ** 2 * u_norm,
        )
        if not report.passed:
            logger.warning(
                f"A-priori bound violated: state {report.state_norm:.3e}/{report.state_bound:.3e}, "
                f"adjoint {report.adjoint_norm:.3e}/{report.adjoint_bound:.3e}, "
                f"gradient {report.gradient_norm:.3e}/{report.gradient_bound:.3e}"
            )
        return report
