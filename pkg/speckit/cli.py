"""
Command-line interface for speckit.

    speckit simulate|train|fit|restore|report [--config PATH] [--out DIR]
                                              [--seed N] [--mode scan|analytic]

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import structlog

from . import __version__
from .core.config import RunConfig, SpeckitSettings, load_config
from .core.exceptions import (
    ArtifactError,
    ConfigError,
    ContactRangeError,
    DimensionError,
    InfeasibleContactError,
    InvalidArgumentError,
    NoContactError,
    NoMinimumError,
    NumericError,
    SpeckitException,
)
from .monitoring.logger import RunLogger, configure_logging
from .pipeline.manifest import RunManifest
from .pipeline.stages import cmd_fit, cmd_report, cmd_restore, cmd_simulate, cmd_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

COMMANDS = ("simulate", "train", "fit", "restore", "report")

HINTS = {
    NoContactError: "widen the g grid ([fit] g_min / g_max)",
    InfeasibleContactError: "try --mode scan or widen the training band",
    ContactRangeError: "extend the alpha tabulation ([alphas] log10_min / log10_max)",
    NoMinimumError: "lower the noise or kernel perturbation levels, or widen the g grid",
    ArtifactError: "run the earlier pipeline stages or check the paths in [io]",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speckit",
        description="Restore broadened spectra with training-example regularization.",
    )
    parser.add_argument("--version", action="version", version=f"speckit {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML config file, or a manifest.yaml of a previous run")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="noise seed of the original example")
    parser.add_argument("--mode", choices=("scan", "analytic"), default=None, help="g fitting mode")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--json-logs", action="store_true", help="JSON log lines")
    return parser


def load_run_config(path: Optional[Path]) -> RunConfig:
    """Config from a TOML file or from the config recorded in a run manifest."""
    if path is not None and path.suffix in (".yaml", ".yml"):
        manifest = RunManifest.load(path)
        return RunConfig.from_dict(manifest.config)
    return load_config(path)


def exit_code_for(error: SpeckitException) -> int:
    if isinstance(error, (ConfigError, InvalidArgumentError, DimensionError)):
        return EXIT_CONFIG
    if isinstance(error, NumericError):
        return EXIT_NUMERIC
    if isinstance(error, ArtifactError):
        return EXIT_IO
    return EXIT_NUMERIC


def _hint(error: SpeckitException) -> Optional[str]:
    for error_type, hint in HINTS.items():
        if isinstance(error, error_type):
            return hint
    return None


def run(args: argparse.Namespace, settings: SpeckitSettings, run_logger: RunLogger) -> None:
    config = load_run_config(args.config).with_overrides(out=args.out, seed=args.seed, mode=args.mode)
    threads = settings.resolved_threads()
    if args.command == "simulate":
        cmd_simulate(config, run_logger)
    elif args.command == "train":
        cmd_train(config, threads, run_logger)
    elif args.command == "fit":
        cmd_fit(config, threads, run_logger)
    elif args.command == "restore":
        cmd_restore(config, run_logger)
    else:
        cmd_report(config, run_logger)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = SpeckitSettings()
    except ValueError as e:
        print(f"speckit: invalid environment settings: {str(e)}", file=sys.stderr)
        return EXIT_CONFIG

    configure_logging("DEBUG" if args.verbose else settings.log_level,
                      json_logs=args.json_logs or settings.json_logs)
    run_logger = RunLogger(service_name="speckit")
    try:
        run(args, settings, run_logger)
    except SpeckitException as e:
        code = exit_code_for(e)
        hint = _hint(e)
        run_logger.log_failure(args.command, e, code, hint)
        message = f"speckit {args.command}: {str(e)}"
        if hint:
            message += f" (hint: {hint})"
        print(message, file=sys.stderr)
        return code
    except OSError as e:
        run_logger.log_failure(args.command, e, EXIT_IO)
        print(f"speckit {args.command}: {str(e)}", file=sys.stderr)
        return EXIT_IO
    structlog.get_logger(__name__).debug("command_finished", command=args.command)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
