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
from app.middleware.preflight import run_preflight
from app.schemas.planner import HistoryMode
from app.services.cost_service import cost_params_from_model, time_cost
from app.services.planner_service import lite_routing, plan_layout_detailed, validate_layout, validate_plan
from app.services.trace_service import records_for_layer, trace_layers

LAG_NOTE = (
    "iteration 0 of every layer uses the even-replication layout; the layout for each later "
    "iteration is planned from routing observed before it"
)


@click.command("plan")
@config_option
@click.option("--trace", "trace_path", default=None, type=click.Path(dir_okay=False), help="Defaults to paths.trace")
@click.option("--out", default=None, type=click.Path(file_okay=False), help="Output directory, defaults to paths.report")
@seed_option()
@click.option("--epsilon", type=click.IntRange(min=2), default=None, help="Candidate-set size")
@click.option("--history-mode", type=click.Choice([m.value for m in HistoryMode]), default=None)
@schemes_option
@handle_errors
def plan_command(
    config_path: str,
    trace_path: str,
    out: str,
    seed: int,
    epsilon: Optional[int],
    history_mode: Optional[str],
    schemes: Optional[List[str]],
):
    """Plan layouts and routing per (layer, iteration) with one-iteration lag"""
    config = load_config(
        config_path,
        planner__seed=seed,
        planner__epsilon=epsilon,
        planner__history_mode=history_mode,
        planner__schemes=schemes,
    )
    trace = trace_repository().load(resolve_path(trace_path, config.paths.trace, "--trace"))
    out = resolve_path(out, config.paths.report, "--out")
    run_preflight(config, trace=trace, needs_seed=True)

    topology, capacity = config.topology, config.model.capacity
    params = cost_params_from_model(config)
    search = search_settings(config)

    entries = []
    for layer in trace_layers(trace):
        records = records_for_layer(trace, layer)
        for position in range(1, len(records) + 1):
            iteration = records[position].iteration if position < len(records) else records[-1].iteration + 1
            history = [r.routing for r in records[:position]]
            result = plan_layout_detailed(search.spec_for(history, layer, iteration), topology, params, capacity)
            validate_layout(result.layout, topology.n_devices, config.model.n_experts, capacity)

            plan_entries, cost = None, None
            if position < len(records):
                routing = records[position].routing
                plan = lite_routing(routing, result.layout, topology)
                validate_plan(plan, routing, result.layout)
                breakdown = time_cost(plan, topology, params)
                plan_entries = plan.entries()
                cost = {"t_comm": breakdown.t_comm, "t_comp": breakdown.t_comp, "t_total": breakdown.t_total}

            entries.append(
                {
                    "iteration": iteration,
                    "layer": layer,
                    "chosen": result.candidates[result.chosen].origin.value,
                    "replicas": result.layout.replica_counts(),
                    "candidates": result.candidates,
                    "layout": result.layout.to_matrix(),
                    "plan": plan_entries,
                    "cost": cost,
                }
            )

    entries.sort(key=lambda e: (e["iteration"], e["layer"]))
    document = {
        "n_devices": topology.n_devices,
        "n_experts": config.model.n_experts,
        "capacity": capacity,
        "seed": seed,
        "note": LAG_NOTE,
        "layouts": entries,
    }
    report_repository().write_json(document, Path(out) / "plans.json")
