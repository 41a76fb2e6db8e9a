"""
Time objective and analytic paradigm costs

time_cost scores a routing plan: four All-to-All hops for communication,
forward + backward (2x) + optional recompute for the busiest device's expert FLOPs.
The analytic helpers compare fully sharded expert parallelism against FSDP + EP.
"""
import logging
import math
from fractions import Fraction
from typing import Tuple

import numpy as np

from app.errors import PreconditionError
from app.schemas.cost import (
    AnalysisConfig,
    AnalysisReport,
    CommAggregation,
    CommVolumeReport,
    CostBreakdown,
    CostParams,
    MemoryFootprint,
)
from app.schemas.planner import RoutingPlan
from app.schemas.run_config import RunConfig
from app.schemas.topology import Topology

logger = logging.getLogger(__name__)

# Dispatch + combine, forward and backward
ALL_TO_ALL_HOPS = 4


def time_cost(plan: RoutingPlan, topology: Topology, params: CostParams) -> CostBreakdown:
    """Evaluate the objective for one layer's routing plan"""
    n_devices = topology.n_devices
    if plan.n_devices != n_devices:
        raise PreconditionError(
            f"routing plan spans {plan.n_devices} devices but topology has {n_devices}"
        )

    # tokens / inf is 0, so local entries drop out
    seconds = plan.tokens / topology.bandwidth_for(plan.src, plan.dst)
    if params.comm_aggregation == CommAggregation.SERIAL:
        link_time = float(seconds.sum())
    else:
        send = np.bincount(plan.src, weights=seconds, minlength=n_devices)
        recv = np.bincount(plan.dst, weights=seconds, minlength=n_devices)
        link_time = float(np.maximum(send, recv).max()) if n_devices else 0.0
    t_comm = ALL_TO_ALL_HOPS * params.v_comm * link_time

    recv_tokens = plan.received_tokens()
    fw_comp = params.v_comp * recv_tokens / params.b_comp
    t_comp = params.comp_multiplier * float(fw_comp.max())

    return CostBreakdown(
        t_comm=t_comm,
        t_comp=t_comp,
        per_device_fw_comp=fw_comp,
        per_device_recv_tokens=recv_tokens,
    )


def swiglu_expert_params(hidden: int, intermediate: int) -> int:
    """Gate, up and down projections"""
    return 3 * hidden * intermediate


def overlap_min_tokens(config: AnalysisConfig, net_bandwidth: float, b_comp: float) -> int:
    """
    Smallest tokens-per-device S whose expert compute hides the parameter prefetch:
    S * K * 6HH' / b_comp >= 3 * C * H * H' * bytes / net_bandwidth
    Evaluated in exact rationals so H and H' cancel without rounding
    """
    if net_bandwidth <= 0 or b_comp <= 0:
        raise PreconditionError("net_bandwidth and b_comp must be positive")
    if config.capacity < 1:
        raise PreconditionError("overlap threshold needs capacity C >= 1")

    h, h_ff = config.hidden, config.intermediate
    prefetch_seconds = Fraction(3 * config.capacity * h * h_ff * config.bytes_per_element) / Fraction(net_bandwidth)
    compute_per_token = Fraction(config.topk * 6 * h * h_ff) / Fraction(b_comp)
    return math.ceil(prefetch_seconds / compute_per_token)


def comm_volume_ratio(config: AnalysisConfig) -> CommVolumeReport:
    """Per-device parameter traffic of FSEP All-to-All vs FSDP Allgather"""
    if config.p_ep * config.p_fsdp != config.p_fsep:
        raise PreconditionError(
            f"paradigms are comparable only when p_ep x p_fsdp = p_fsep "
            f"({config.p_ep} x {config.p_fsdp} != {config.p_fsep})"
        )
    if config.n_experts is not None and config.capacity * config.p_ep != config.n_experts:
        raise PreconditionError(
            f"paradigms are comparable only when C x p_ep = E "
            f"({config.capacity} x {config.p_ep} != {config.n_experts})"
        )
    if config.p_fsdp == 1:
        raise PreconditionError("volume ratio is undefined for p_fsdp = 1 (FSDP moves no parameters)")

    p_fsep, p_fsdp = config.p_fsep, config.p_fsdp
    v_fsep = config.capacity * (p_fsep - 1) / p_fsep * config.psi_expert
    v_fsdp = (p_fsdp - 1) / p_fsdp * config.capacity * config.psi_expert
    ratio = ((p_fsep - 1) * p_fsdp) / (p_fsep * (p_fsdp - 1))
    return CommVolumeReport(v_fsep=v_fsep, v_fsdp=v_fsdp, ratio=ratio)


def memory_footprint(config: AnalysisConfig) -> MemoryFootprint:
    """Sharded states plus C materialised experts, doubled for prefetch buffering"""
    parameter_bytes = config.psi_all / config.p_fsep + config.psi_other + 2 * config.capacity * config.psi_expert
    return MemoryFootprint(
        optimizer_fraction=1.0 / config.p_fsep,
        parameter_bytes=parameter_bytes,
        gradient_bytes=parameter_bytes,
    )


def cost_params_from_model(config: RunConfig) -> CostParams:
    """Fill v_comm / v_comp from model shapes when the cost block leaves them out"""
    cost, model = config.cost, config.model
    v_comm = cost.v_comm if cost.v_comm is not None else float(model.hidden * model.bytes_per_element)
    v_comp = cost.v_comp if cost.v_comp is not None else float(6 * model.hidden * model.intermediate)
    return CostParams(
        v_comm=v_comm,
        v_comp=v_comp,
        b_comp=cost.b_comp,
        f_ckpt=cost.f_ckpt,
        comm_aggregation=cost.comm_aggregation,
    )


def analysis_config_from_run(config: RunConfig) -> Tuple[AnalysisConfig, float]:
    """
    Derive paradigm dims from the run config
    p_fsep defaults to N, p_ep to E / C, p_fsdp to p_fsep / p_ep
    """
    model, analysis = config.model, config.analysis
    p_fsep = analysis.p_fsep or config.topology.n_devices
    p_ep = analysis.p_ep or max(1, model.n_experts // model.capacity)
    p_fsdp = analysis.p_fsdp or max(1, p_fsep // p_ep)

    if model.psi_expert is not None:
        psi_expert = model.psi_expert
    elif model.hidden is not None and model.intermediate is not None:
        psi_expert = float(swiglu_expert_params(model.hidden, model.intermediate) * model.bytes_per_element)
    else:
        psi_expert = 0.0

    shapes = {}
    if model.hidden is not None:
        shapes["hidden"] = model.hidden
    if model.intermediate is not None:
        shapes["intermediate"] = model.intermediate

    analysis_config = AnalysisConfig(
        p_fsep=p_fsep,
        p_ep=p_ep,
        p_fsdp=p_fsdp,
        psi_expert=psi_expert,
        psi_other=model.psi_other,
        psi_all=model.psi_all,
        capacity=model.capacity,
        topk=model.topk,
        tokens_per_device=model.tokens_per_device,
        bytes_per_element=model.bytes_per_element,
        n_experts=model.n_experts,
        **shapes,
    )
    net_bandwidth = analysis.net_bandwidth or config.topology.b_inter
    return analysis_config, net_bandwidth


def analyze_run(config: RunConfig) -> AnalysisReport:
    """Volume ratio, memory footprint and overlap threshold for one run config"""
    analysis_config, net_bandwidth = analysis_config_from_run(config)

    comm_volume, comm_volume_error = None, None
    try:
        comm_volume = comm_volume_ratio(analysis_config)
    except PreconditionError as e:
        # the other analytics stay meaningful without paradigm equivalence
        logger.warning(f"Volume ratio skipped: {e.detail}")
        comm_volume_error = e.detail

    threshold = overlap_min_tokens(analysis_config, net_bandwidth, config.cost.b_comp)
    return AnalysisReport(
        comm_volume=comm_volume,
        comm_volume_error=comm_volume_error,
        memory=memory_footprint(analysis_config),
        overlap_min_tokens=threshold,
        overlap_satisfied=analysis_config.tokens_per_device >= threshold,
        net_bandwidth=net_bandwidth,
        b_comp=config.cost.b_comp,
    )
