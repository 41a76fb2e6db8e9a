"""
Command-line Application Entry Point
Pattern: Factory (Creational) - Application factory creates the configured click command group
"""
import logging
import sys
from typing import Optional

import click

from app.api.analysis import analyze_command
from app.api.oracle import oracle_command
from app.api.planning import plan_command
from app.api.simulation import simulate_command, sweep_command
from app.api.traces import generate_trace_command, trace_stats_command
from app.config import get_settings

VERSION = "1.0.0"


def configure_logging(level: Optional[str] = None) -> None:
    """Root logger to stderr; artifacts own stdout"""
    settings = get_settings()
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=settings.log_format,
        stream=sys.stderr,
        force=True,
    )


def create_application() -> click.Group:
    """
    Pattern: Factory (Creational)
    Creates the CLI group with every subcommand registered
    """

    @click.group(name="moe-planner", help="Load-adaptive expert re-layout planner, simulator and oracle")
    @click.version_option(VERSION)
    @click.option("--log-level", default=None, help="Overrides MOE_PLANNER_LOG_LEVEL")
    def cli(log_level: Optional[str]):
        configure_logging(log_level)

    for command in (
        generate_trace_command,
        trace_stats_command,
        plan_command,
        simulate_command,
        sweep_command,
        analyze_command,
        oracle_command,
    ):
        cli.add_command(command)
    return cli


app = create_application()


def run(argv=None) -> int:
    """Run the CLI and return its exit status"""
    try:
        app.main(args=argv, prog_name="moe-planner", standalone_mode=True)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else (0 if e.code is None else 1)
    return 0


if __name__ == "__main__":
    sys.exit(run())
