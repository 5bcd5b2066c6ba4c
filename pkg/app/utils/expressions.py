from functools import lru_cache
from typing import Callable
import logging

import numpy as np
import sympy

from app.core.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

_X1, _X2 = sympy.symbols("x1 x2")


class AnalyticProfile:
    """A closed-form function of (x1, x2) on the unit square, compiled for numpy"""

    def __init__(self, expression: str):
        self.expression = expression
        self._function = _compile(expression)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (..., 2)"""
        points = np.asarray(points, dtype=float)
        values = self._function(points[..., 0], points[..., 1])
        # constants come back as scalars
        return np.broadcast_to(np.asarray(values, dtype=float), points.shape[:-1]).copy()

    def __repr__(self) -> str:
        return f"AnalyticProfile({self.expression!r})"

    def __reduce__(self):
        return (AnalyticProfile, (self.expression,))


@lru_cache(maxsize=32)
def _compile(expression: str) -> Callable:
    try:
        parsed = sympy.sympify(expression, locals={"x1": _X1, "x2": _X2, "pi": sympy.pi})
    except (sympy.SympifyError, SyntaxError, TypeError) as e:
        raise ConfigurationError(f"Cannot parse expression {expression!r}: {e}") from e

    unknown = parsed.free_symbols - {_X1, _X2}
    if unknown:
        names = ", ".join(sorted(str(symbol) for symbol in unknown))
        raise ConfigurationError(f"Expression {expression!r} uses unknown symbols: {names}")

    logger.debug(f"Compiled analytic profile: {parsed}")
    return sympy.lambdify((_X1, _X2), parsed, modules="numpy")
