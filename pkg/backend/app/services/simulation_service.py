"""
Trace-driven simulation of MoE-layer time under competing layout schedulers

Each (layer, scheduler) stream walks the layer's iterations in order: the scheduler picks
a layout from routing seen so far, lite routing dispatches the iteration's tokens and the
time objective scores the result. Streams are independent and may run in worker processes.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import PreconditionError
from app.schemas.cost import CommAggregation, CostParams
from app.schemas.oracle import OracleBudget
from app.schemas.planner import SearchSettings
from app.schemas.simulation import (
    BalanceMetrics,
    ScalabilityRow,
    ScalabilityTable,
    SchedulerKind,
    SimRecord,
    SimReport,
)
from app.schemas.topology import Topology
from app.schemas.trace import TraceGenSpec, TraceRecord
from app.services.cost_service import time_cost
from app.services.planner_service import check_shape, lite_routing, validate_plan
from app.services.scheduler_service import get_scheduler
from app.services.simulation_observer import SimulationStep, SimulationTracker
from app.services.trace_service import generate_trace, records_for_layer, tile_trace, trace_layers

logger = logging.getLogger(__name__)

SWEEP_DEVICE_COUNTS = (8, 16, 32, 64, 128)


def _simulate_stream(
    records: Sequence[TraceRecord],
    layer: int,
    kind: SchedulerKind,
    topology: Topology,
    params: CostParams,
    capacity: int,
    search: SearchSettings,
    budget: Optional[OracleBudget],
) -> List[SimulationStep]:
    """One layer under one scheduler, iterations in order"""
    n_experts = records[0].routing.n_experts
    scheduler = get_scheduler(kind, topology, params, capacity, n_experts, search=search, budget=budget)

    steps = []
    history = []
    for record in records:
        routing = record.routing
        layout = scheduler.layout_for(layer, record.iteration, history, routing)
        plan = lite_routing(routing, layout, topology)
        validate_plan(plan, routing, layout)
        cost = time_cost(plan, topology, params)

        total = routing.total_tokens()
        steps.append(
            SimulationStep(
                record=SimRecord(
                    iteration=record.iteration,
                    layer=layer,
                    scheduler=kind,
                    t_comm=cost.t_comm,
                    t_comp=cost.t_comp,
                    t_total=cost.t_total,
                    max_recv_tokens=cost.max_recv_tokens,
                    ideal_tokens=total / topology.n_devices,
                    total_tokens=total,
                ),
                layout=layout,
                plan=plan,
            )
        )
        history.append(routing)
    return steps


def _run_stream_job(job: Tuple) -> List[SimulationStep]:
    return _simulate_stream(*job)


def _check_trace(trace: Sequence[TraceRecord], topology: Topology) -> Tuple[int, int]:
    if not trace:
        raise PreconditionError("simulation needs a non-empty trace")
    shapes = {record.routing.counts.shape for record in trace}
    if len(shapes) != 1:
        raise PreconditionError(f"trace records disagree on (N, E): {sorted(shapes)}")
    n_devices, n_experts = shapes.pop()
    if n_devices != topology.n_devices:
        raise PreconditionError(f"trace has {n_devices} devices but topology has {topology.n_devices}")
    return n_devices, n_experts


def mean_iteration_times(records: Iterable[SimRecord]) -> Dict[str, float]:
    """Mean over iterations of the per-iteration sum over layers"""
    per_iteration: Dict[str, Dict[int, float]] = {}
    for record in records:
        times = per_iteration.setdefault(record.scheduler.value, {})
        times[record.iteration] = times.get(record.iteration, 0.0) + record.t_total
    return {name: float(np.mean(list(times.values()))) for name, times in per_iteration.items()}


def speedup_table(mean_times: Dict[str, float]) -> Dict[str, Dict[str, Optional[float]]]:
    """
    speedup[x][y] = mean_time[y] / mean_time[x]; 1 when both are zero
    None when only x took zero time, so reports stay valid JSON
    """
    table: Dict[str, Dict[str, Optional[float]]] = {}
    for x, time_x in mean_times.items():
        row = {}
        for y, time_y in mean_times.items():
            if x == y or time_x == time_y:
                row[y] = 1.0
            elif time_x == 0:
                row[y] = None
            else:
                row[y] = time_y / time_x
        table[x] = row
    return table


def run_simulation(
    trace: Sequence[TraceRecord],
    topology: Topology,
    params: CostParams,
    capacity: int,
    schedulers: Union[SchedulerKind, Sequence[SchedulerKind]],
    search: Optional[SearchSettings] = None,
    budget: Optional[OracleBudget] = None,
    tracker: Optional[SimulationTracker] = None,
    workers: int = 1,
) -> SimReport:
    """Simulate every layer of the trace under each scheduler and aggregate the results"""
    kinds = [SchedulerKind(schedulers)] if isinstance(schedulers, (str, SchedulerKind)) else list(schedulers)
    if not kinds:
        raise PreconditionError("at least one scheduler is required")
    n_devices, n_experts = _check_trace(trace, topology)
    check_shape(n_devices, n_experts, capacity)
    search = search or SearchSettings()

    jobs = [
        (records_for_layer(trace, layer), layer, kind, topology, params, capacity, search, budget)
        for layer in trace_layers(trace)
        for kind in kinds
    ]
    logger.info(
        f"Simulating {len(jobs)} streams: {len(trace)} records, N={n_devices}, E={n_experts}, C={capacity}, "
        f"schedulers={[k.value for k in kinds]}"
    )
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_stream_job, jobs))
    else:
        results = [_run_stream_job(job) for job in jobs]

    order = {kind: index for index, kind in enumerate(kinds)}
    steps = sorted(
        (step for stream in results for step in stream),
        key=lambda s: (s.record.iteration, s.record.layer, order[s.record.scheduler]),
    )
    if tracker is not None:
        for step in steps:
            tracker.notify_observers(step)

    records = [step.record for step in steps]
    mean_times = mean_iteration_times(records)
    balance = {
        kind.value: float(np.mean([r.balance_ratio for r in records if r.scheduler == kind]))
        for kind in kinds
    }
    report = SimReport(
        schedulers=kinds,
        n_devices=n_devices,
        n_experts=n_experts,
        capacity=capacity,
        records=records,
        mean_iteration_time={kind.value: mean_times[kind.value] for kind in kinds},
        speedup=speedup_table({kind.value: mean_times[kind.value] for kind in kinds}),
        mean_balance_ratio=balance,
    )
    if tracker is not None:
        tracker.complete(report)
    return report


def balance_metrics(report: SimReport) -> Dict[str, BalanceMetrics]:
    """Mean and 95th percentile of max_recv / ideal per scheduler"""
    if not report.records:
        raise PreconditionError("balance metrics need a non-empty report")
    metrics = {}
    for kind in report.schedulers:
        ratios = [r.balance_ratio for r in report.records_for(kind)]
        if ratios:
            metrics[kind.value] = BalanceMetrics(mean=float(np.mean(ratios)), p95=float(np.percentile(ratios, 95)))
    return metrics


def scalability_sweep(
    topology: Topology,
    params: CostParams,
    capacity: int,
    trace_spec: Optional[TraceGenSpec] = None,
    trace: Optional[Sequence[TraceRecord]] = None,
    device_counts: Sequence[int] = SWEEP_DEVICE_COUNTS,
    baseline: SchedulerKind = SchedulerKind.STATIC_EP,
    search: Optional[SearchSettings] = None,
    comm_aggregation: Optional[CommAggregation] = CommAggregation.BOTTLENECK,
    workers: int = 1,
) -> ScalabilityTable:
    """
    Speedup of laer over `baseline` per cluster size
    A trace spec is regenerated per N with the same seed and per-device token count;
    a concrete trace is tiled onto N devices instead
    """
    if baseline == SchedulerKind.LAER:
        raise PreconditionError("the sweep baseline must differ from laer")
    if (trace_spec is None) == (trace is None):
        raise PreconditionError("scalability sweep needs exactly one of a trace spec or a trace")
    if comm_aggregation is not None:
        params = params.model_copy(update={"comm_aggregation": comm_aggregation})

    n_experts = trace_spec.n_experts if trace_spec is not None else trace[0].routing.n_experts
    for n_devices in device_counts:
        check_shape(n_devices, n_experts, capacity)

    rows = []
    for n_devices in device_counts:
        sized = topology.with_devices(n_devices)
        if trace_spec is not None:
            records = generate_trace(trace_spec.model_copy(update={"n_devices": n_devices}))
        else:
            records = tile_trace(trace, n_devices)

        report = run_simulation(
            records, sized, params, capacity, [SchedulerKind.LAER, baseline], search=search, workers=workers
        )
        laer, other = SchedulerKind.LAER.value, baseline.value
        rows.append(
            ScalabilityRow(
                n_devices=n_devices,
                laer_time=report.mean_iteration_time[laer],
                baseline_time=report.mean_iteration_time[other],
                speedup=report.speedup[laer][other],
            )
        )
        logger.info(f"Sweep N={n_devices}: speedup {rows[-1].speedup} over {other}")

    speedups = np.array([row.speedup for row in rows if row.speedup is not None])
    variation = float(speedups.std() / speedups.mean()) if speedups.size and speedups.mean() > 0 else 0.0
    return ScalabilityTable(baseline=baseline, rows=rows, coefficient_of_variation=variation)
