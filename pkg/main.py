#!/usr/bin/env python3
"""
Stochastic proximal gradient toolkit CLI

Usage:
    python main.py solve --config run.env --out run.csv
    python main.py sweep-mesh --meshes 20 30 40 50 60 70 --out table.csv
    python main.py check-gradient --mesh-n 20 --trials 50
    python main.py check-prox --pairs 1000
    python main.py sample-field --index 0 --out field.csv
"""

from typing import List, Optional
import argparse
import logging
import sys

from app.core.config import Settings, load_settings
from app.core.exceptions import ConfigurationError
from app.handlers.command_handler import CommandHandler
from app.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="dotenv-style file with SPG_* keys")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--seed", type=int)
    common.add_argument("--mesh-n", type=int, dest="mesh_n")
    common.add_argument("--n-max", type=int, dest="n_max")
    common.add_argument("--workers", type=int)
    common.add_argument("--quiet", action="store_true", help="only warnings and errors on the console")

    parser = argparse.ArgumentParser(description="Stochastic proximal gradient methods for PDE control under uncertainty")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("solve", parents=[common], help="run the decreasing-step proximal method")

    sweep = commands.add_parser("sweep-mesh", parents=[common], help="one solve per mesh size")
    sweep.add_argument("--meshes", type=int, nargs="+", default=[20, 30, 40, 50, 60, 70])
    sweep.add_argument("--sweep-workers", type=int, dest="sweep_workers")

    gradient = commands.add_parser("check-gradient", parents=[common], help="finite-difference gradient test")
    gradient.add_argument("--trials", type=int, default=10)
    gradient.add_argument("--epsilon", type=float, default=1e-5)
    gradient.add_argument("--fault", action="store_true", help="perturb lambda2 in the gradient only")

    prox = commands.add_parser("check-prox", parents=[common], help="closed-form prox against scalar minimization")
    prox.add_argument("--pairs", type=int, default=1000)

    field = commands.add_parser("sample-field", parents=[common], help="dump one coefficient sample")
    field.add_argument("--index", type=int, default=0)

    return parser


def configure_logging(config: Settings, quiet: bool = False) -> None:
    console = logging.StreamHandler(sys.stdout)
    if quiet:
        console.setLevel(logging.WARNING)
    handlers: List[logging.Handler] = [console]
    if config.log_file:
        handlers.append(logging.FileHandler(config.log_file))

    logging.basicConfig(
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    args = build_parser().parse_args(argv)

    try:
        config = load_settings(
            args.config,
            seed=args.seed,
            mesh_n=args.mesh_n,
            n_max=args.n_max,
            workers=args.workers,
            sweep_workers=getattr(args, "sweep_workers", None),
        )
    except ConfigurationError as e:
        logging.basicConfig(level=logging.ERROR, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        logger.error(str(e))
        return ConfigurationError.exit_code

    configure_logging(config, args.quiet)
    handler = CommandHandler(ExperimentService(config))
    return handler.process_command(args)


if __name__ == "__main__":
    sys.exit(main())
