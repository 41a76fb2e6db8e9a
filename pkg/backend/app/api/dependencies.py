"""
Shared command plumbing: error mapping, config loading with flag overrides, common options
"""
import functools
import logging
import sys
from typing import Any, Callable, Optional

import click
from pydantic import ValidationError

from app.config import get_settings, load_run_config
from app.errors import ConfigError, PlannerError
from app.repositories.report_repository import ReportRepository, get_report_repository
from app.repositories.trace_repository import TraceRepository, get_trace_repository
from app.schemas.planner import CandidateScheme, SearchSettings
from app.schemas.run_config import RunConfig

logger = logging.getLogger(__name__)


def handle_errors(command: Callable) -> Callable:
    """
    Pattern: Decorator (Structural)
    PlannerError -> one-line diagnostic on stderr and the error's exit status
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            error: PlannerError = ConfigError(f"{location}: {first['msg']}" if location else first["msg"])
        except PlannerError as e:
            error = e
        logger.debug(f"{command.__name__} failed with exit code {error.exit_code}: {error.detail}")
        click.echo(f"error: {error.detail}", err=True)
        sys.exit(error.exit_code)

    return wrapper


def config_option(command: Callable) -> Callable:
    return click.option(
        "--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Run config JSON"
    )(command)


def seed_option(required: bool = True) -> Callable:
    return click.option(
        "--seed", type=click.IntRange(0, 2**64 - 1), required=required, help="Seed for every randomised step"
    )


def schemes_option(command: Callable) -> Callable:
    """--schemes proportional,even: base candidate schemes of the layout search"""

    def parse(ctx, param, value: Optional[str]):
        if value is None:
            return None
        names = [part.strip() for part in value.split(",") if part.strip()]
        known = {scheme.value for scheme in CandidateScheme}
        unknown = [name for name in names if name not in known]
        if unknown or not names:
            raise click.BadParameter(
                f"expected a comma-separated subset of {sorted(known)}, got {value!r}", param=param
            )
        return names

    return click.option(
        "--schemes", default=None, callback=parse, help="Base candidate schemes, defaults to planner.schemes"
    )(command)


def load_config(config_path: str, **overrides: Any) -> RunConfig:
    """Run config with CLI flags (block__field=value) applied on top"""
    config = load_run_config(config_path)
    return config.with_overrides(**overrides)


def search_settings(config: RunConfig) -> SearchSettings:
    planner = config.planner
    return SearchSettings(
        epsilon=planner.epsilon,
        seed=planner.seed or 0,
        history_mode=planner.history_mode,
        ema_decay=planner.ema_decay,
        schemes=planner.schemes,
    )


def trace_repository() -> TraceRepository:
    return get_trace_repository()


def report_repository() -> ReportRepository:
    return get_report_repository(get_settings())


def emit(text: str, out: Optional[str]) -> None:
    """Write to `out` when given, else stdout"""
    if out:
        report_repository().write_text(text, out)
    else:
        click.echo(text, nl=False)


def resolve_path(flag_value: Optional[str], configured: Optional[str], flag: str) -> str:
    """Flag wins over the config's paths block; one of them must be set"""
    path = flag_value or configured
    if not path:
        raise ConfigError(f"{flag} is required (or set it in the config's paths block)")
    return path
