from pathlib import Path
from typing import List, Optional

import click

from app.api.dependencies import (
    config_option,
    handle_errors,
    load_config,
    report_repository,
    resolve_path,
    schemes_option,
    search_settings,
    seed_option,
    trace_repository,
)
from app.config import get_settings
from app.errors import PreconditionError
from app.middleware.preflight import run_preflight
from app.schemas.cost import CommAggregation
from app.schemas.simulation import SchedulerKind
from app.services.cost_service import cost_params_from_model
from app.services.scheduler_service import parse_scheduler_list
from app.services.simulation_observer import LoggingObserver, SimulationTracker
from app.services.simulation_service import SWEEP_DEVICE_COUNTS, balance_metrics, run_simulation, scalability_sweep


@click.command("simulate")
@config_option
@click.option("--trace", "trace_path", default=None, type=click.Path(dir_okay=False), help="Defaults to paths.trace")
@click.option("--schedulers", default=None, help="Comma-separated scheduler list")
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Output directory, defaults to paths.report")
@seed_option()
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Worker processes for independent streams")
@schemes_option
@handle_errors
def simulate_command(
    config_path: str,
    trace_path: str,
    schedulers: Optional[str],
    out: str,
    seed: int,
    workers: Optional[int],
    schemes: Optional[List[str]],
):
    """Trace-driven comparison of layout schedulers"""
    settings = get_settings()
    kinds = parse_scheduler_list(schedulers or settings.default_schedulers)
    config = load_config(config_path, planner__seed=seed, planner__schemes=schemes)
    trace = trace_repository().load(resolve_path(trace_path, config.paths.trace, "--trace"))
    out = resolve_path(out, config.paths.report, "--out")
    run_preflight(config, trace=trace, schedulers=kinds, needs_seed=True)

    tracker = SimulationTracker()
    tracker.attach(LoggingObserver())
    report = run_simulation(
        trace,
        config.topology,
        cost_params_from_model(config),
        config.model.capacity,
        kinds,
        search=search_settings(config),
        budget=config.oracle,
        tracker=tracker,
        workers=workers or settings.workers,
    )

    repository = report_repository()
    document = repository.to_jsonable(report)
    document["balance"] = repository.to_jsonable(balance_metrics(report))
    repository.write_json(document, Path(out) / "report.json")
    repository.write_text(repository.records_csv(report.records), Path(out) / "records.csv")


@click.command("sweep")
@config_option
@click.option("--trace-spec", "spec_path", default=None, type=click.Path(dir_okay=False), help="Regenerate per size")
@click.option("--trace", "trace_path", default=None, type=click.Path(dir_okay=False), help="Tile onto each size")
@click.option("--devices", default=",".join(str(n) for n in SWEEP_DEVICE_COUNTS), help="Comma-separated sizes")
@click.option(
    "--baseline",
    type=click.Choice([k.value for k in SchedulerKind if k not in (SchedulerKind.LAER, SchedulerKind.ORACLE_LAYOUT)]),
    default=SchedulerKind.STATIC_EP.value,
)
@click.option("--comm-aggregation", type=click.Choice([a.value for a in CommAggregation]), default=CommAggregation.BOTTLENECK.value)
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@seed_option()
@handle_errors
def sweep_command(
    config_path: str,
    spec_path: Optional[str],
    trace_path: Optional[str],
    devices: str,
    baseline: str,
    comm_aggregation: str,
    out: str,
    seed: int,
):
    """Speedup of laer over a baseline across cluster sizes"""
    if (spec_path is None) == (trace_path is None):
        raise click.UsageError("give exactly one of --trace-spec or --trace")
    try:
        device_counts = [int(part) for part in devices.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"not a comma-separated list of integers: {devices}", param_hint="--devices")

    config = load_config(config_path, planner__seed=seed)
    repository = trace_repository()
    trace_spec = repository.load_spec(spec_path) if spec_path else None
    trace = repository.load(trace_path) if trace_path else None
    if trace is not None and not trace:
        raise PreconditionError("trace has no records")

    table = scalability_sweep(
        config.topology,
        cost_params_from_model(config),
        config.model.capacity,
        trace_spec=trace_spec,
        trace=trace,
        device_counts=device_counts,
        baseline=SchedulerKind(baseline),
        search=search_settings(config),
        comm_aggregation=CommAggregation(comm_aggregation),
        workers=get_settings().workers,
    )

    reports = report_repository()
    reports.write_json(table, Path(out) / "sweep.json")
    reports.write_text(reports.sweep_csv(table), Path(out) / "sweep.csv")
