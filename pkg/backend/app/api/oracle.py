from typing import Optional

import click

from app.api.dependencies import (
    config_option,
    emit,
    handle_errors,
    load_config,
    report_repository,
    seed_option,
    trace_repository,
)
from app.errors import PreconditionError
from app.middleware.preflight import run_preflight
from app.services.cost_service import cost_params_from_model
from app.services.oracle_service import gap_report


@click.command("oracle")
@config_option
@click.option("--instance", "instance_path", required=True, type=click.Path(dir_okay=False), help='{"R": [[...]]}')
@seed_option()
@click.option("--max-layouts", type=click.IntRange(min=1), default=None, help="Layout enumeration budget")
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write here instead of stdout")
@handle_errors
def oracle_command(config_path: str, instance_path: str, seed: int, max_layouts: Optional[int], out: Optional[str]):
    """Greedy planner cost against the exact optimum on a tiny instance"""
    config = load_config(config_path, planner__seed=seed, oracle__max_layout_candidates=max_layouts)
    routing = trace_repository().load_instance(instance_path)
    run_preflight(config, needs_seed=True, exact_search=True)
    if (routing.n_devices, routing.n_experts) != (config.topology.n_devices, config.model.n_experts):
        raise PreconditionError(
            f"instance is {routing.n_devices} devices x {routing.n_experts} experts but the config describes "
            f"{config.topology.n_devices} x {config.model.n_experts}"
        )

    report = gap_report(
        routing,
        config.topology,
        cost_params_from_model(config),
        config.model.capacity,
        seed=seed,
        epsilon=config.planner.epsilon,
        budget=config.oracle,
    )
    emit(report_repository().dumps(report), out)
