from typing import Optional, TYPE_CHECKING

if TYPE_CHECKING:
    from app.schemas.records import RunRecord


class SpgError(Exception):
    """Base error of the stochastic proximal gradient toolkit"""

    exit_code = 1


class ConfigurationError(SpgError):
    """Invalid or unreadable run configuration"""

    exit_code = 2


class SolverError(SpgError):
    """A PDE solve did not produce a usable answer"""

    exit_code = 3


class NewtonConvergenceError(SolverError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class LinearSolveError(SolverError):
    pass


class MeshMismatchError(ValueError):
    """Fields living on different meshes were combined"""


class IterationError(SpgError):
    """A gradient or monitor callback failed inside an optimization loop"""

    exit_code = 3

    def __init__(self, iteration: int, cause: Exception, record: Optional["RunRecord"] = None):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
        self.record = record
