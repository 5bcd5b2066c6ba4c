from typing import Callable, Literal, Optional, Union
import logging
import time

from app.core.exceptions import ConfigurationError, IterationError
from app.schemas.algorithms import (
    BatchSchedule,
    GradientEvaluation,
    IterationState,
    MonitorSample,
    ProxSpec,
    StepSchedule,
)
from app.schemas.fields import ControlField
from app.schemas.records import RunRecord, RunRow
from app.services.hilbert import max_abs
from app.services.prox_service import prox_l1_box, validate_schedule

logger = logging.getLogger(__name__)

# callback(u, n, batch_size) returns the batch mean gradient at u_n
GradientCallback = Callable[[ControlField, int, int], Union[ControlField, GradientEvaluation]]
Monitor = Callable[[ControlField, int], MonitorSample]
Termination = Callable[[RunRecord], bool]

PROGRESS_EVERY = 50

TerminationRule = Literal["mean", "sum"]


def window_terms(n: int, window: int = 50) -> int:
    """Number of r_k entering r_hat_n"""
    return n - max(1, n - window) + 1


def windowed_sum(record: RunRecord, window: int = 50) -> Optional[float]:
    """r_hat_n = sum of r_k for k = max(1, n - window) .. n, defined once n >= window"""
    n = record.n_iters
    if n < window:
        return None
    first = max(1, n - window)
    return float(sum(row.r_n for row in record.rows[-(window + 1):] if row.n >= first))


class WindowedStationarity:
    """Stop once n >= window and the windowed statistic of r_n is <= tol

    rule="mean" compares the average of the r_k summed in r_hat_n, rule="sum" compares r_hat_n itself.
    """

    def __init__(self, tol: float = 2e-4, window: int = 50, rule: TerminationRule = "mean"):
        if rule not in ("mean", "sum"):
            raise ConfigurationError(f"Unknown termination rule: {rule}")
        self.tol = tol
        self.window = window
        self.rule = rule

    def statistic(self, record: RunRecord) -> Optional[float]:
        last = record.last
        if last is None or last.n < self.window or last.r_hat is None:
            return None
        if self.rule == "sum":
            return last.r_hat
        return last.r_hat / window_terms(last.n, self.window)

    def __call__(self, record: RunRecord) -> bool:
        value = self.statistic(record)
        return value is not None and value <= self.tol


def _as_evaluation(result: Union[ControlField, GradientEvaluation]) -> GradientEvaluation:
    if isinstance(result, GradientEvaluation):
        return result
    return GradientEvaluation(result)


def _require_schedule(s: StepSchedule) -> None:
    diagnostics = validate_schedule(s)
    if not diagnostics.passed:
        raise ConfigurationError(f"Step schedule fails Robbins-Monro: {', '.join(diagnostics.failures)}")


def _run_loop(
    gradient: GradientCallback,
    step: Callable[[int], float],
    batch_size: Callable[[int], int],
    prox: Optional[ProxSpec],
    u1: ControlField,
    n_max: int,
    monitor: Optional[Monitor],
    termination: Optional[Termination],
    window: int,
    record_wall_time: bool,
    label: str,
    single_sample: bool = True,
) -> RunRecord:
    """Shared iteration: log row n at u_n, test termination, then take the step

    Single-sample loops log the estimator sample count as m_n, batched loops their batch size.
    """
    record = RunRecord(control=u1)
    state = IterationState(n=1, u=u1, started_at=time.perf_counter())
    logger.info(f"{label}: starting, n_max={n_max}")

    while state.n <= n_max:
        n = state.n
        t_n = step(n)
        m_n = batch_size(n)

        try:
            sample = monitor(state.u, n) if monitor is not None else None
        except IterationError:
            raise
        except Exception as e:
            logger.error(f"{label}: monitor failed at iteration {n}: {e}")
            raise IterationError(n, e, record) from e

        logged_m = sample.samples if sample is not None and single_sample else m_n
        row = RunRow(n=n, t_n=t_n, m_n=logged_m)
        if sample is not None:
            row.f_hat = sample.f_hat
            row.r_n = sample.r_n
            row.clamp_count = sample.clamp_count
        record.append(row)
        if sample is not None:
            row.r_hat = windowed_sum(record, window)
        if record_wall_time:
            row.wall_ms = 1000.0 * (time.perf_counter() - state.started_at)

        if termination is not None and termination(record):
            record.terminated = True
            record.reason = "tolerance"
            logger.info(f"{label}: terminated at n={n} (r_hat={row.r_hat})")
            break

        try:
            evaluation = _as_evaluation(gradient(state.u, n, m_n))
        except IterationError:
            raise
        except Exception as e:
            logger.error(f"{label}: gradient evaluation failed at iteration {n}: {e}")
            raise IterationError(n, e, record) from e

        row.clamp_count += evaluation.clamp_count
        record.bias_sum += t_n * evaluation.bias_bound
        z = state.u - t_n * evaluation.gradient
        state.u = prox_l1_box(z, t_n, prox) if prox is not None else z
        state.n += 1
        record.control = state.u

        if n % PROGRESS_EVERY == 0:
            logger.info(f"{label}: n={n}, t_n={t_n:.3e}, f_hat={row.f_hat:.6e}, r_n={row.r_n:.3e}")

    if not record.terminated:
        record.reason = "n_max"
        logger.info(f"{label}: stopped at n_max={n_max}")
    return record


def run_sgd(
    gradient: GradientCallback,
    s: StepSchedule,
    u1: ControlField,
    n_max: int = 100_000,
    monitor: Optional[Monitor] = None,
    termination: Optional[Termination] = None,
    window: int = 50,
    record_wall_time: bool = False,
) -> RunRecord:
    """Plain stochastic gradient u_{n+1} = u_n - t_n G(u_n, xi_n), h = 0"""
    _require_schedule(s)
    return _run_loop(
        gradient, s.step, lambda n: 1, None, u1, n_max,
        monitor, termination, window, record_wall_time, "SGD",
    )


def run_vr_spg(
    gradient: GradientCallback,
    t_const: float,
    L: float,
    batches: BatchSchedule,
    prox: ProxSpec,
    u1: ControlField,
    n_max: int = 100_000,
    monitor: Optional[Monitor] = None,
    termination: Optional[Termination] = None,
    window: int = 50,
    record_wall_time: bool = False,
) -> RunRecord:
    """Constant step with growing batches: u_{n+1} = prox_th(u_n - t mean_i G(u_n, xi_n^i))"""
    if L <= 0:
        raise ConfigurationError(f"Lipschitz constant must be positive, got {L}")
    if not 0.0 < t_const < 1.0 / (2.0 * L):
        raise ConfigurationError(f"Step t={t_const} violates 0 < t < 1/(2L) = {1.0 / (2.0 * L)}")
    if batches.kind == "fixed":
        raise ConfigurationError("Variance reduction needs a growing batch schedule, got 'fixed'")
    if not batches.summable_inverse:
        logger.warning(f"Batch schedule '{batches.kind}' does not make sum 1/m_n finite")

    return _run_loop(
        gradient, StepSchedule.constant(t_const).step, batches.size, prox, u1, n_max,
        monitor, termination, window, record_wall_time, "VR-SPG", single_sample=False,
    )


def run_spg_decreasing(
    gradient: GradientCallback,
    s: StepSchedule,
    prox: ProxSpec,
    u1: ControlField,
    n_max: int = 100_000,
    termination: Optional[Termination] = None,
    monitor: Optional[Monitor] = None,
    window: int = 50,
    record_wall_time: bool = False,
) -> RunRecord:
    """Single-sample decreasing steps: u_{n+1} = prox_{t_n h}(u_n - t_n G(u_n, xi_n))"""
    _require_schedule(s)
    if prox.uses_box and not prox.box.contains(u1):
        logger.warning(f"Initial control (max |u|={max_abs(u1):.3f}) lies outside the box, projecting")
        u1 = u1.with_values(prox.box.clip(u1.values))

    return _run_loop(
        gradient, s.step, lambda n: 1, prox, u1, n_max,
        monitor, termination, window, record_wall_time, "SPG",
    )
