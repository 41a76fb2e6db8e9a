from typing import Optional

import click

from app.api.dependencies import emit, handle_errors, report_repository, trace_repository
from app.services.trace_service import generate_trace, trace_stats


@click.command("generate-trace")
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False), help="Trace spec JSON")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Trace file to write")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override the spec seed")
@handle_errors
def generate_trace_command(spec_path: str, out: str, seed: Optional[int]):
    """Write a synthetic routing trace"""
    repository = trace_repository()
    spec = repository.load_spec(spec_path)
    if seed is not None:
        spec = spec.model_copy(update={"seed": seed})
    repository.write(generate_trace(spec), out)


@click.command("trace-stats")
@click.option("--trace", "trace_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@handle_errors
def trace_stats_command(trace_path: str, out: Optional[str]):
    """Per-record expert loads and shares"""
    stats = trace_stats(trace_repository().load(trace_path))
    emit(report_repository().dumps(stats), out)
