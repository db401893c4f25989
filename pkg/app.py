# app.py - Command-line entry point of the forward-density toolkit

import argparse
import json
import sys
from typing import List, Optional

from dotenv import load_dotenv
from loguru import logger

from engines.orchestrator import COMMANDS, RunOrchestrator
from models.config_models import RunConfig
from utils.exceptions import ForwardDensityError
from utils.logging_utils import configure_logging

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE = 2


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdtrack",
        description="Calibrate, simulate and track a lognormal-mixture forward density",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--output", help="Artifact directory, overrides the config")
    common.add_argument("--log-level", help="loguru level of the console sink")
    common.add_argument("--progress", action="store_true", help="Show progress bars")

    help_text = {
        "calibrate": "Calibrate the mixture and write the spec and diagnostics",
        "range": "Write the extreme price vectors of the model",
        "simulate": "Simulate price paths, correlation statistics and the martingale check",
        "track": "Recover the driver from a price series",
        "smile": "Filtered implied-volatility smiles",
        "density": "Model, Black and smile-implied densities",
        "detscan": "Jacobian determinant over a (w1, w2) grid",
        "correlations": "Return/volatility correlations of the quote series",
    }
    for name in COMMANDS:
        sub = subparsers.add_parser(name, parents=[common], help=help_text[name])
        if name in ("simulate", "track", "smile"):
            sub.add_argument("--seed", type=int, help="Master seed, overrides the config")
        if name == "track":
            sub.add_argument("--method", choices=["linear", "filter"], help="Tracking method")
        if name in ("smile", "density"):
            sub.add_argument("--times", type=_float_list, help="Comma-separated smile days or density times")
        if name == "detscan":
            sub.add_argument("--time", type=float, help="Model time of the scan")
    return parser


def run_command(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run one command and report the outcome.

    Returns:
        int: 0 on success, 1 on a domain, configuration or internal error, 2 on a usage error
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        config = RunConfig.from_file(args.config)
        if args.progress:
            config.output.progress = True
        configure_logging(args.log_level or config.log_level)

        times = getattr(args, "times", None)
        if getattr(args, "time", None) is not None:
            times = [args.time]
        orchestrator = RunOrchestrator(config, output_dir=args.output)
        state = orchestrator.run(
            args.command,
            method=getattr(args, "method", None),
            seed=getattr(args, "seed", None),
            times=times,
        )
    except ForwardDensityError as e:
        print(json.dumps(e.to_dict(), default=str, sort_keys=True))
        return EXIT_DOMAIN_ERROR
    except Exception as e:
        logger.exception(f"{args.command} failed with an unexpected error")
        document = {"error": "internal_error", "message": str(e), "details": {"type": type(e).__name__}}
        print(json.dumps(document, sort_keys=True))
        return EXIT_DOMAIN_ERROR

    logger.info(f"{args.command} wrote {len(state['artifacts'])} artifacts")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run_command())
