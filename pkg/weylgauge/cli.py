"""Console entry point for weyl-gauge.

Referenced by `[project.scripts]` in pyproject.toml as `weylgauge.cli:main`.
The root `weyl-gauge.py` is a thin shim that calls into here for in-tree development.
"""

import argparse
import json
import logging
import os
import sys
import traceback
from logging.handlers import RotatingFileHandler
from pathlib import Path

from . import __version__, constants
from .artifacts import ArtifactWriter
from .errors import ConfigError, WeylGaugeError
from .experiments import EXPERIMENTS, resolve_config, run_experiment

log: logging.Logger | None = None

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_CHECK_FAILED = 3

_DESCRIPTIONS = {
    "geometry-check": "Curvature scalar of catalogue metrics against the Riemann-contraction oracle.",
    "extremal": "Discrete action extremals against shooting geodesics.",
    "double-slit": "Two-path fringe pattern, decoherence threshold and the trajectory-counting cross-check.",
    "ab-sweep": "Fringe shift as the enclosed flux is swept.",
    "moments": "Damped Gaussian moments, closed form against quadrature.",
    "hj-order": "Hamilton-Jacobi residual order of the short-time action expansion.",
    "kg-verify": "Klein-Gordon plane-wave, gauge-covariance and invariance checks.",
    "kernel-consistency": "Short-time kernel step against the lattice operator.",
}


class ColorFormatter(logging.Formatter):
    COLORS = {
        "DEBUG": "\033[1;36m",
        "INFO": "\033[1;32m",
        "WARNING": "\033[1;33m",
        "ERROR": "\033[1;31m",
        "CRITICAL": "\033[1;41m",
        "RESET": "\033[0m",
    }

    def format(self, record):
        # colour a copy; the file handler formats the same record afterwards
        record = logging.makeLogRecord(record.__dict__)
        level_color = self.COLORS.get(record.levelname, "")
        reset = self.COLORS["RESET"]
        record.levelname = f"{level_color}{record.levelname}{reset}"
        record.name = f"\033[1;34m{record.name}\033[0m"
        record.asctime = f"\033[1;37m{self.formatTime(record, self.datefmt)}\033[0m"
        return super().format(record)


def _add_run_arguments(parser: argparse.ArgumentParser, default) -> None:
    flag_default = False if default is None else default
    parser.add_argument("--config", default=default, help="Experiment config (JSON)")
    parser.add_argument("--out", default=default, help="Output directory (overrides output.directory)")
    parser.add_argument("--seed", type=int, default=default, help="Random seed (overrides parameters.seed)")
    parser.add_argument(
        "--workers", type=int, default=default, help="Worker threads for sampling experiments"
    )
    parser.add_argument(
        "--dry-run",
        action="store_true",
        default=flag_default,
        help="Validate and print the resolved config without computing",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weyl-gauge",
        description="Run gauge-transformation verification experiments.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "-d", "--debug", action="store_true", help="Enable debug logging"
    )
    parser.add_argument(
        "-v", "--version", action="version", version=f"weyl-gauge v{__version__}"
    )
    parser.add_argument(
        "--settings",
        default=constants.CONFIG_FILE_PATH,
        help="INI file with numerical settings",
    )
    parser.add_argument(
        "--init-settings",
        action="store_true",
        help="Write the settings file with its defaults if it does not exist",
    )

    _add_run_arguments(parser, default=None)

    # given after the experiment name; SUPPRESS keeps a value given before it
    common = argparse.ArgumentParser(add_help=False)
    _add_run_arguments(common, default=argparse.SUPPRESS)

    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sub.add_parser(
            name,
            parents=[common],
            help=_DESCRIPTIONS[name],
            description=_DESCRIPTIONS[name],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
    return parser


def setup_logging(debug=False):
    global log
    try:
        log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        date_format = "%Y-%m-%d %H:%M:%S"

        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setLevel(logging.DEBUG if debug else logging.INFO)
        stream_handler.setFormatter(ColorFormatter(log_format, datefmt=date_format))

        handlers: list[logging.Handler] = [stream_handler]

        if debug:
            Path(constants.CONFIG_DIR).mkdir(parents=True, exist_ok=True)
            log_file_path = os.path.join(constants.CONFIG_DIR, constants.LOG_FILENAME)
            file_handler = RotatingFileHandler(
                filename=log_file_path,
                maxBytes=5 * 1024 * 1024,
                backupCount=3,
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(log_format, datefmt=date_format))
            handlers.append(file_handler)

        logging.basicConfig(level=logging.DEBUG, handlers=handlers)
        log = logging.getLogger(__name__)
        log.info(f"Logging initialized ({'DEBUG + file' if debug else 'INFO'})")
    except Exception as e:
        print(f"CRITICAL: Failed to set up logging: {e}", file=sys.stderr)
        traceback.print_exc()
        sys.exit(1)


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    return raw


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(debug=args.debug)
    assert log is not None

    settings = constants.load_settings(args.settings, create_missing=args.init_settings)
    if args.init_settings:
        log.info(f"Settings file: {settings.config_path}")
    if args.experiment is None:
        if args.init_settings:
            return EXIT_OK
        parser.print_usage(sys.stderr)
        print("weyl-gauge: error: choose an experiment", file=sys.stderr)
        return EXIT_CONFIG

    try:
        raw = load_config_file(args.config) if args.config else None
        resolved = resolve_config(args.experiment, raw, args.seed, args.out, args.workers)
        if args.dry_run:
            print(json.dumps(resolved, indent=2, sort_keys=True))
            return EXIT_OK
        output = resolved["output"]
        writer = ArtifactWriter(output["directory"], output["formats"])
        result = run_experiment(resolved, writer)
    except WeylGaugeError as e:
        log.error(f"{type(e).__name__}: {e}")
        return e.exit_code

    for check in result.checks:
        print(check.line())
    failed = [c.name for c in result.checks if not c.passed]
    if failed:
        log.warning(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_CHECK_FAILED
    log.info(f"All {len(result.checks)} checks passed; results in {output['directory']}")
    return EXIT_OK


def main():
    try:
        status = run()
    except Exception as e:
        if log is not None:
            log.critical(f"Unhandled exception in main: {e}", exc_info=True)
        else:
            print(f"CRITICAL: Unhandled exception: {e}", file=sys.stderr)
        sys.exit(1)
    sys.exit(status)


if __name__ == "__main__":
    main()
