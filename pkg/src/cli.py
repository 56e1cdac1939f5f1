#!/usr/bin/env python3
"""
Command-line entry point: ``semistab run | sweep | validate | export-model``.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import structlog
from rich.console import Console
from rich.table import Table

from . import experiment
from .config import get_settings
from .exceptions import EXIT_INTERNAL, EXIT_OK, EXIT_VALIDATION, SemistabError
from .models.semistab_models import Report

logger = structlog.get_logger(__name__)


def configure_logging() -> None:
    settings = get_settings()
    renderer = (
        structlog.dev.ConsoleRenderer(colors=False)
        if settings.log_format == "text"
        else structlog.processors.JSONRenderer()
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if settings.log_file_path is not None:
        handlers.append(logging.FileHandler(settings.log_file_path, encoding="utf-8"))
    logging.basicConfig(
        level=getattr(logging, settings.log_level), format="%(message)s",
        handlers=handlers, force=True,
    )


def _seed(value: str) -> int:
    try:
        return int(value, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be hexadecimal, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semistab",
        description="Numerical checks of non-uniform orbit integrability and polynomial decay.",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", required=True, type=Path, help="experiment JSON document")
        sub.add_argument("--out", type=Path, default=None, help="output directory")
        sub.add_argument("--seed", type=_seed, default=None, help="probe seed (hex)")
        sub.add_argument(
            "--threads", type=int, default=None,
            help="worker threads (falls back to SEMISTAB_THREADS)",
        )

    common(verbs.add_parser("run", help="run the configured analyses"))
    sweep = verbs.add_parser("sweep", help="run the analyses over a list of dimensions")
    common(sweep)
    sweep.add_argument(
        "--dimensions", type=int, nargs="+", default=None,
        help="override sweep_dimensions from the config",
    )
    verbs.add_parser("validate", help="check a config without computing").add_argument(
        "--config", required=True, type=Path
    )
    export = verbs.add_parser("export-model", help="write the model matrices as Matrix Market")
    export.add_argument("--config", required=True, type=Path)
    export.add_argument("--out", type=Path, default=None)
    return parser


def print_summary(report: Report, console: Optional[Console] = None) -> None:
    console = console or Console(stderr=True)
    table = Table(title="semistab report")
    table.add_column("analysis")
    table.add_column("dimension", justify="right")
    table.add_column("status")
    table.add_column("detail")
    for outcome in report.results:
        status = "[green]ok[/green]" if outcome.success else f"[red]error ({outcome.error_code})[/red]"
        table.add_row(
            outcome.analysis.value,
            "" if outcome.dimension is None else str(outcome.dimension),
            status,
            outcome.error or "",
        )
    console.print(table)
    for ratio_table in report.ratio_tables:
        console.print(
            f"{ratio_table.quantity}: ratios "
            + ", ".join(f"{r:.4g}" for r in ratio_table.ratios)
        )
    for warning in report.warnings:
        console.print(f"[yellow]warning[/yellow] {warning}")


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        config = experiment.load_config(args.config)
        if args.verb == "validate":
            logger.info("Config valid", config=str(args.config))
            return EXIT_OK
        if args.verb == "export-model":
            experiment.export_model(config.model, args.out or config.output_dir or get_settings().output_dir)
            return EXIT_OK
        if args.verb == "sweep":
            dimensions = args.dimensions or config.sweep_dimensions
            report = experiment.sweep(config, dimensions, args.out, args.seed, args.threads)
        else:
            report = experiment.run(config, args.out, args.seed, args.threads)
    except SemistabError as e:
        logger.error("Command failed", verb=args.verb, error=str(e), code=e.error_code)
        return e.error_code or EXIT_VALIDATION
    except Exception as e:
        logger.exception("Internal error", verb=args.verb, error=str(e))
        return EXIT_INTERNAL
    print_summary(report)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
