import logging

import numpy as np

from app.schemas.algorithms import ProxSpec, StepSchedule
from app.schemas.fields import ControlField
from app.schemas.records import ScheduleDiagnostics
from app.services.hilbert import norm_l2_p0

logger = logging.getLogger(__name__)


def prox_l1_box(z: ControlField, t: float, spec: ProxSpec) -> ControlField:
    """Soft-threshold by t * lambda1, then clamp into the box

    |z| == t * lambda1 maps to 0. Clamping after thresholding is the exact scalar
    prox of lambda1 |v| + indicator([lower, upper]) for any bounds.
    """
    if t <= 0:
        raise ValueError(f"Prox step must be positive, got {t}")

    values = z.values
    if spec.uses_l1 and spec.lambda1 > 0:
        values = np.sign(values) * np.maximum(np.abs(values) - t * spec.lambda1, 0.0)
    if spec.uses_box:
        values = spec.box.clip(values)
    return z.with_values(values)


def stationarity_measure(u: ControlField, g_avg: ControlField, prox: ProxSpec) -> float:
    """||u - prox_h(u - g)|| with unit step"""
    return norm_l2_p0(u - prox_l1_box(u - g_avg, 1.0, prox))


def validate_schedule(s: StepSchedule) -> ScheduleDiagnostics:
    """Check the Robbins-Monro conditions sum t_n = inf, sum t_n^2 < inf"""
    if s.kind == "constant":
        failures = [] if s.t_const > 0 else ["positive"]
        return ScheduleDiagnostics(
            passed=not failures,
            failures=failures,
            notes=["constant steps are meant for the variance-reduced method with 0 < t < 1/(2L)"],
        )

    failures = []
    if s.theta <= 0:
        failures.append("positive")
    if s.alpha > 1.0:
        failures.append("sum_diverges")
    if s.alpha <= 0.5:
        failures.append("sum_squares_converges")
    if failures:
        logger.debug(f"Schedule theta={s.theta}, alpha={s.alpha} fails: {', '.join(failures)}")
    return ScheduleDiagnostics(passed=not failures, failures=failures)
