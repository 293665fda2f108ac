"""
Command line surface.

    python main.py tensor      --config config/example1.toml
    python main.py grad-check  --config config/gradcheck.toml --fd-step 1e-4
    python main.py optimize    --config config/example1.toml --level 5 --jobs 4
    python main.py uq          --config config/example6_uq.toml
    python main.py mesh-export --config config/example1.toml --out meshes

Exit codes: 0 success, 2 configuration or expression error, 3 invalid shape
or mesh failure, 4 solver failure, 5 gradient check above tolerance,
6 optimizer stopped without converging.
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

import api
from core.errors import (
    ExpressionEvaluationError,
    ExpressionSyntaxError,
    InvalidShapeError,
    MeshError,
    SolverError,
)
from core.specs import ValidationError, default_log_level, load_config


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MESH = 3
EXIT_SOLVER = 4
EXIT_GRAD_CHECK = 5
EXIT_NOT_CONVERGED = 6

FAILURE_EXIT_CODES = {"grad-check": EXIT_GRAD_CHECK, "optimize": EXIT_NOT_CONVERGED}

ERROR_EXIT_CODES = [
    ((ValidationError, ExpressionSyntaxError, ExpressionEvaluationError), EXIT_CONFIG),
    ((InvalidShapeError, MeshError), EXIT_MESH),
    ((SolverError,), EXIT_SOLVER),
]


def configure_logging(level: str = "INFO") -> None:
    """Install one stderr handler on the root logger."""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellopt",
        description="Effective tensors and shape optimization of periodic cells",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: HOMOPT_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--level", type=int, default=None, help="Mesh refinement level")
        p.add_argument("--seed", type=int, default=None, help="Seed of the perturbed initial shape")
        p.add_argument("--out", default=None, help="Output directory")
        p.add_argument("--jobs", type=int, default=1, help="Parallel workers for [sweep] tables")

    common(sub.add_parser("tensor", help="Effective tensor of the initial shape"))
    grad = sub.add_parser("grad-check", help="Analytic gradient against central differences")
    common(grad)
    grad.add_argument("--fd-step", type=float, default=None, help="Central difference step")
    grad.add_argument("--coeffs", default=None, help="Comma-separated coefficient indices")
    grad.add_argument("--flip-sign", action="store_true", help=argparse.SUPPRESS)
    common(sub.add_parser("optimize", help="Match the target tensor"))
    common(sub.add_parser("uq", help="Shape Taylor expansion study (perforated)"))
    common(sub.add_parser("mesh-export", help="Write the refined mesh"))
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {}
    if args.level is not None:
        overrides["mesh.level"] = args.level
    if args.seed is not None:
        overrides["init.seed"] = args.seed
    if args.out is not None:
        overrides["output.dir"] = args.out
    return overrides


def _parse_coeffs(text: Optional[str]) -> Optional[List[int]]:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ValidationError(f"--coeffs must be comma-separated integers: {text!r}") from e


def run_command(args: argparse.Namespace) -> int:
    """Dispatch one parsed command; typed errors propagate to main."""
    config = load_config(args.config, _overrides(args))

    if args.command == "mesh-export":
        path = api.export_mesh(config)
        logger.info("Mesh written to %s", path)
        return EXIT_OK

    if args.command == "grad-check":
        if config.sweep is not None:
            raise ValidationError("grad-check does not run [sweep] tables; remove the [sweep] section")
        report = api.check_gradient(
            config,
            fd_step=args.fd_step,
            coeffs=_parse_coeffs(args.coeffs),
            flip_sign=args.flip_sign,
        )
        return _status("grad-check", report)

    if config.sweep is not None:
        results = api.run_sweep(args.command, config, jobs=args.jobs)
        for out_dir, ok in results:
            logger.info("Sweep job %s %s", out_dir, "succeeded" if ok else "failed")
        failed = [ok for _, ok in results if not ok]
        return FAILURE_EXIT_CODES.get(args.command, EXIT_OK) if failed else EXIT_OK

    result = api.COMMANDS[args.command](config)
    return _status(args.command, result)


def _status(command: str, result) -> int:
    if api.succeeded(command, result):
        return EXIT_OK
    return FAILURE_EXIT_CODES[command]


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or default_log_level())
    try:
        return run_command(args)
    except Exception as e:
        for classes, code in ERROR_EXIT_CODES:
            if isinstance(e, classes):
                print(f"error: {e}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
