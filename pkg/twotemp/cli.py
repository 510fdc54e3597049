"""Command-line front end: configuration, experiment dispatch and report files.

Usage:
    twotemp ode-check --config c.json --out results/
    twotemp sweep-eta --threads 4 --out results/
    twotemp --print-defaults

Exit codes: 0 when every check passes, 1 on a failed check or invariant violation,
2 on usage, configuration or geometry errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, List, Optional, Sequence

from . import __version__
from .config import (
    COMMAND_PRESETS,
    DEFAULTS,
    ExperimentConfig,
    apply_preset,
    config_hash,
    configure_from_env,
    load_config,
)
from .errors import (
    ConfigError,
    IncommensurateSpacing,
    InvalidEpsilon,
    InvariantViolation,
    PackingInfeasible,
    TwoTempError,
    UnresolvedInclusion,
)
from .harness import EXPERIMENTS
from .serialization import write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

# Errors that mean the request itself cannot be run
USAGE_ERRORS = (
    ConfigError,
    PackingInfeasible,
    InvalidEpsilon,
    IncommensurateSpacing,
    UnresolvedInclusion,
)

PREFIX = "🌡️ twotemp:"


class _UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so run_cli can return the exit code."""

    def error(self, message: str):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="twotemp", description="Two-temperature homogenization experiments"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--print-defaults", action="store_true", help="print the default configuration and exit"
    )
    parser.add_argument(
        "command", nargs="?", choices=sorted(COMMAND_PRESETS), help="experiment to run"
    )
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads for sweep levels")
    parser.add_argument("--seed", type=int, help="placement seed (overrides the config)")
    parser.add_argument(
        "--log-level",
        default=os.getenv("TWOTEMP_LOG_LEVEL", "WARNING"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        type=str.upper,
        help="log level (default: $TWOTEMP_LOG_LEVEL or WARNING)",
    )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults < command preset < config file < environment < flags."""
    config = load_config(args.config) if args.config is not None else DEFAULTS
    config = apply_preset(config, args.command)
    config = configure_from_env(config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if overrides:
        config = config.with_overrides(**overrides)
    return config


def output_stem(command: str) -> str:
    return command.replace("-", "_")


def write_outputs(result: Any, command: str, out_dir: Path, digest: str) -> List[Path]:
    """Write the JSON report, the CSV table and one CSV ledger per run.

    Raises:
        ConfigError: If the output directory cannot be created
    """
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out_dir}: {e}")
    stem = output_stem(command)
    written = [
        write_json(out_dir / f"{stem}.json", result.to_dict()),
        write_csv(out_dir / f"{stem}.csv", result.csv_header(), result.csv_rows()),
    ]
    for label, ledger in sorted(result.ledgers.items()):
        path = out_dir / f"ledger_{digest}_{label}.csv"
        written.append(write_csv(path, ledger.columns(), ledger.rows()))
    return written


def ensure_passed(result: Any):
    """Raises InvariantViolation naming the failed checks."""
    failed = result.failed_checks
    if failed:
        raise InvariantViolation(f"failed checks: {', '.join(failed)}")


def summary_line(command: str, result: Any, digest: str) -> str:
    status = "passed" if result.passed else f"FAILED ({len(result.failed_checks)} checks)"
    return f"{PREFIX} {command} [{digest}] {status}, {len(result.checks)} checks"


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"{PREFIX} usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.print_defaults:
        print(json.dumps(DEFAULTS.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        print(f"{PREFIX} usage error: a command is required", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = resolve_config(args)
        digest = config_hash(config)
        logger.info("running %s with config %s", args.command, digest)
        result = EXPERIMENTS[args.command](config)
        write_outputs(result, args.command, args.out, digest)
        print(summary_line(args.command, result, digest))
        ensure_passed(result)
    except USAGE_ERRORS as e:
        print(f"{PREFIX} error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TwoTempError as e:
        print(f"{PREFIX} error: {e}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def main():
    sys.exit(run_cli())
