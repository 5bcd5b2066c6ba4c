from argparse import Namespace
from typing import Callable, Dict
import logging

from app.core.exceptions import SpgError
from app.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1


class CommandHandler:
    """Dispatches parsed CLI commands to the experiment service and maps outcomes to exit codes"""

    def __init__(self, experiments: ExperimentService):
        self.experiments = experiments
        self._commands: Dict[str, Callable[[Namespace], int]] = {
            "solve": self._handle_solve,
            "sweep-mesh": self._handle_sweep_mesh,
            "check-gradient": self._handle_check_gradient,
            "check-prox": self._handle_check_prox,
            "sample-field": self._handle_sample_field,
        }

    def process_command(self, args: Namespace) -> int:
        """Run one command, returning the process exit status"""
        handler = self._commands.get(args.command)
        if handler is None:
            logger.error(f"Unknown command: {args.command}")
            return EXIT_CHECK_FAILED
        try:
            logger.info(f"Processing command: {args.command}")
            return handler(args)
        except SpgError as e:
            logger.error(f"{args.command} failed: {e}")
            if e.exit_code != 2:
                logger.exception("Full traceback:")
            return e.exit_code

    def _handle_solve(self, args: Namespace) -> int:
        outcome = self.experiments.solve(args.out)
        summary = outcome.summary
        print(
            f"n_iters={summary.n_iters} f_hat={summary.f_hat_final} r_hat={summary.r_hat_final} "
            f"terminated={summary.terminated} max_abs_u={summary.max_abs_control:.6g}"
        )
        return EXIT_OK

    def _handle_sweep_mesh(self, args: Namespace) -> int:
        rows = self.experiments.sweep_mesh(args.meshes, args.out)
        for row in rows:
            print(
                f"N={row.mesh_n} h={row.h_hat:.4e} triangles={row.n_triangles} "
                f"f_hat={row.f_hat} iterations={row.n_iters} terminated={row.terminated}"
            )
        return EXIT_OK

    def _handle_check_gradient(self, args: Namespace) -> int:
        report = self.experiments.check_gradient(args.trials, epsilon=args.epsilon, fault=args.fault)
        for trial in report.epsilon_sweep:
            print(f"epsilon={trial.epsilon:.0e} relative_error={trial.relative_error:.3e}")
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{verdict}: worst relative error {report.worst_relative_error:.3e} (threshold {report.threshold:.0e})")
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    def _handle_check_prox(self, args: Namespace) -> int:
        report = self.experiments.check_prox(args.pairs)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{verdict}: worst absolute error {report.worst_abs_error:.3e} over {report.pairs} pairs")
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED

    def _handle_sample_field(self, args: Namespace) -> int:
        columns = self.experiments.sample_field(args.index, args.out)
        for name, values in columns.items():
            print(f"{name}: min={values.values.min():.6g} max={values.values.max():.6g}")
        return EXIT_OK
