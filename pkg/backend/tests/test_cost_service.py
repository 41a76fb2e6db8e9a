import numpy as np
import pytest

from app.errors import PreconditionError
from app.schemas.cost import AnalysisConfig, CommAggregation, CostParams
from app.schemas.planner import RoutingPlan
from app.schemas.run_config import RunConfig
from app.schemas.topology import Topology
from app.services.cost_service import (
    analysis_config_from_run,
    analyze_run,
    comm_volume_ratio,
    cost_params_from_model,
    memory_footprint,
    overlap_min_tokens,
    swiglu_expert_params,
    time_cost,
)


@pytest.fixture
def two_hop_plan():
    """Device 0 sends 10 tokens of expert 0 to device 1; device 1 keeps its 5"""
    return RoutingPlan.from_entries(2, 1, src=[0, 1], expert=[0, 0], dst=[1, 1], tokens=[10, 5])


def test_time_cost_hand_example(two_hop_plan, pair_topology, unit_params):
    cost = time_cost(two_hop_plan, pair_topology, unit_params)

    assert cost.t_comm == pytest.approx(0.4)
    assert cost.per_device_fw_comp.tolist() == pytest.approx([0.0, 1.5])
    assert cost.t_comp == pytest.approx(4.5)
    assert cost.t_total == pytest.approx(4.9)
    assert cost.max_recv_tokens == 15


def test_time_cost_checkpointing_adds_a_forward(two_hop_plan, pair_topology):
    params = CostParams(v_comm=1.0, v_comp=1.0, b_comp=10.0, f_ckpt=1)
    assert time_cost(two_hop_plan, pair_topology, params).t_comp == pytest.approx(6.0)


def test_time_cost_bottleneck_aggregation(pair_topology):
    plan = RoutingPlan.from_entries(2, 2, src=[0, 1], expert=[1, 0], dst=[1, 0], tokens=[10, 20])
    serial = time_cost(plan, pair_topology, CostParams(v_comm=1.0, v_comp=1.0, b_comp=10.0))
    bottleneck = time_cost(
        plan,
        pair_topology,
        CostParams(v_comm=1.0, v_comp=1.0, b_comp=10.0, comm_aggregation=CommAggregation.BOTTLENECK),
    )

    assert serial.t_comm == pytest.approx(4 * 0.3)
    # device 1 sends 20 and device 0 receives 20
    assert bottleneck.t_comm == pytest.approx(4 * 0.2)
    assert bottleneck.t_comp == serial.t_comp


def test_time_cost_local_only_plan_has_no_comm(pair_topology, unit_params):
    plan = RoutingPlan.from_entries(2, 2, src=[0, 1], expert=[0, 1], dst=[0, 1], tokens=[7, 3])
    assert time_cost(plan, pair_topology, unit_params).t_comm == 0.0


def test_time_cost_rejects_foreign_plan(two_hop_plan, unit_params):
    topology = Topology(n_nodes=1, devices_per_node=4, b_intra=100.0, b_inter=10.0)
    with pytest.raises(PreconditionError):
        time_cost(two_hop_plan, topology, unit_params)


def test_time_cost_is_monotone_in_tokens(pair_topology, unit_params):
    small = RoutingPlan.from_entries(2, 1, src=[0], expert=[0], dst=[1], tokens=[4])
    large = RoutingPlan.from_entries(2, 1, src=[0], expert=[0], dst=[1], tokens=[5])
    assert time_cost(small, pair_topology, unit_params).t_total < time_cost(large, pair_topology, unit_params).t_total


def test_overlap_min_tokens_a100():
    config = AnalysisConfig(p_fsep=32, p_ep=4, p_fsdp=8, capacity=2, hidden=4096, intermediate=14336, topk=2)
    assert overlap_min_tokens(config, net_bandwidth=12.5e9, b_comp=312e12) == 24960


def test_overlap_min_tokens_does_not_depend_on_model_width():
    thresholds = {
        overlap_min_tokens(
            AnalysisConfig(p_fsep=32, p_ep=4, p_fsdp=8, capacity=2, hidden=hidden, intermediate=intermediate),
            net_bandwidth=12.5e9,
            b_comp=312e12,
        )
        for hidden in (1024, 4096, 14336)
        for intermediate in (1024, 4096, 14336)
    }
    assert thresholds == {24960}


def test_overlap_min_tokens_non_increasing_in_topk_and_bandwidth():
    config = AnalysisConfig(p_fsep=32, p_ep=4, p_fsdp=8, capacity=2)
    by_topk = [
        overlap_min_tokens(config.model_copy(update={"topk": k}), net_bandwidth=12.5e9, b_comp=312e12)
        for k in range(1, 9)
    ]
    by_bandwidth = [
        overlap_min_tokens(config, net_bandwidth=bandwidth, b_comp=312e12)
        for bandwidth in (3.125e9, 6.25e9, 12.5e9, 25e9, 50e9, 100e9)
    ]
    assert all(later <= earlier for earlier, later in zip(by_topk, by_topk[1:]))
    assert all(later <= earlier for earlier, later in zip(by_bandwidth, by_bandwidth[1:]))
    assert by_topk[0] > by_topk[-1]


def test_overlap_min_tokens_rejects_bad_inputs():
    config = AnalysisConfig(p_fsep=4, p_ep=2, p_fsdp=2, capacity=0)
    with pytest.raises(PreconditionError):
        overlap_min_tokens(config, net_bandwidth=12.5e9, b_comp=312e12)
    with pytest.raises(PreconditionError):
        overlap_min_tokens(config.model_copy(update={"capacity": 1}), net_bandwidth=0, b_comp=312e12)


def test_comm_volume_ratio():
    report = comm_volume_ratio(AnalysisConfig(p_fsep=8, p_ep=4, p_fsdp=2, capacity=2, psi_expert=1.0))
    assert report.ratio == pytest.approx(14 / 8)
    assert report.v_fsep / report.v_fsdp == pytest.approx(report.ratio)

    report = comm_volume_ratio(AnalysisConfig(p_fsep=32, p_ep=4, p_fsdp=8, capacity=2, psi_expert=1.0))
    assert report.ratio == pytest.approx(248 / 224, abs=1e-12)


def test_comm_volume_ratio_is_one_without_expert_parallelism():
    for p_fsep in (2, 8, 32):
        report = comm_volume_ratio(AnalysisConfig(p_fsep=p_fsep, p_ep=1, p_fsdp=p_fsep, capacity=2, psi_expert=1.0))
        assert report.ratio == pytest.approx(1.0, abs=1e-12)


def test_comm_volume_ratio_approaches_one_as_fsdp_grows():
    ratios = [
        comm_volume_ratio(AnalysisConfig(p_fsep=4 * p_fsdp, p_ep=4, p_fsdp=p_fsdp, capacity=2)).ratio
        for p_fsdp in range(2, 33)
    ]
    assert all(ratio > 1 for ratio in ratios)
    assert all(later < earlier for earlier, later in zip(ratios, ratios[1:]))


def test_comm_volume_ratio_requires_equivalence():
    with pytest.raises(PreconditionError):
        comm_volume_ratio(AnalysisConfig(p_fsep=8, p_ep=3, p_fsdp=2, capacity=2))
    with pytest.raises(PreconditionError):
        comm_volume_ratio(AnalysisConfig(p_fsep=8, p_ep=4, p_fsdp=2, capacity=2, n_experts=16))
    with pytest.raises(PreconditionError):
        comm_volume_ratio(AnalysisConfig(p_fsep=4, p_ep=4, p_fsdp=1, capacity=2))


def test_memory_footprint():
    config = AnalysisConfig(p_fsep=8, p_ep=4, p_fsdp=2, capacity=2, psi_all=8e9, psi_other=1e9, psi_expert=5e8)
    footprint = memory_footprint(config)
    assert footprint.optimizer_fraction == pytest.approx(1 / 8)
    assert footprint.parameter_bytes == pytest.approx(1e9 + 1e9 + 2e9)
    assert footprint.gradient_bytes == footprint.parameter_bytes


def test_swiglu_expert_params():
    assert swiglu_expert_params(4096, 14336) == 3 * 4096 * 14336


@pytest.fixture
def run_config():
    return RunConfig.model_validate(
        {
            "topology": {"n_nodes": 4, "devices_per_node": 8, "b_intra": 300e9, "b_inter": 12.5e9},
            "model": {"n_experts": 8, "capacity": 2, "hidden": 4096, "intermediate": 14336},
        }
    )


def test_cost_params_from_model(run_config):
    params = cost_params_from_model(run_config)
    assert params.v_comm == 4096 * 2
    assert params.v_comp == 6 * 4096 * 14336
    assert params.b_comp == 312e12


def test_analysis_config_defaults(run_config):
    config, net_bandwidth = analysis_config_from_run(run_config)
    assert (config.p_fsep, config.p_ep, config.p_fsdp) == (32, 4, 8)
    assert config.psi_expert == swiglu_expert_params(4096, 14336) * 2
    assert net_bandwidth == 12.5e9


def test_analyze_run(run_config):
    report = analyze_run(run_config)
    assert report.comm_volume.ratio == pytest.approx(248 / 224)
    assert report.overlap_min_tokens == 24960
    assert report.overlap_satisfied is False


def test_analyze_run_keeps_going_without_equivalence(run_config):
    skewed = run_config.with_overrides(analysis__p_ep=3)
    report = analyze_run(skewed)
    assert report.comm_volume is None
    assert "p_ep" in report.comm_volume_error
    assert report.overlap_min_tokens == 24960


def test_per_device_breakdown(two_hop_plan, pair_topology, unit_params):
    cost = time_cost(two_hop_plan, pair_topology, unit_params)
    assert isinstance(cost.per_device_recv_tokens, np.ndarray)
    assert cost.per_device_recv_tokens.tolist() == [0, 15]


@pytest.fixture
def cross_node_plan():
    """Every device sends some tokens to every other device, two experts"""
    src, expert, dst = np.meshgrid(np.arange(4), np.arange(2), np.arange(4), indexing="ij")
    tokens = (src * 7 + expert * 3 + dst * 5) % 11 + 1
    return RoutingPlan.from_entries(4, 2, src.ravel(), expert.ravel(), dst.ravel(), tokens.ravel())


@pytest.mark.parametrize("aggregation", list(CommAggregation))
def test_time_cost_ignores_device_order_within_a_node(cross_node_plan, two_by_two, aggregation):
    params = CostParams(v_comm=1.0, v_comp=1.0, b_comp=10.0, comm_aggregation=aggregation)
    swap = np.array([1, 0, 3, 2])
    relabelled = RoutingPlan.from_entries(
        4, 2, swap[cross_node_plan.src], cross_node_plan.expert, swap[cross_node_plan.dst], cross_node_plan.tokens
    )
    original = time_cost(cross_node_plan, two_by_two, params)
    permuted = time_cost(relabelled, two_by_two, params)
    assert permuted.t_comm == pytest.approx(original.t_comm, rel=1e-12)
    assert permuted.t_comp == original.t_comp
    assert permuted.per_device_recv_tokens.tolist() == original.per_device_recv_tokens[swap].tolist()


@pytest.mark.parametrize("aggregation", list(CommAggregation))
def test_time_cost_doubles_with_every_entry(cross_node_plan, two_by_two, aggregation):
    params = CostParams(v_comm=1.0, v_comp=1.0, b_comp=10.0, comm_aggregation=aggregation)
    doubled = cross_node_plan.model_copy(update={"tokens": cross_node_plan.tokens * 2})
    single = time_cost(cross_node_plan, two_by_two, params)
    double = time_cost(doubled, two_by_two, params)
    assert double.t_comm == 2 * single.t_comm
    assert double.t_comp == 2 * single.t_comp


def test_moving_tokens_between_same_node_replicas_keeps_comm(two_by_two, unit_params):
    # device 0 on node 0 feeds expert 0 replicas on devices 2 and 3 of node 1
    before = RoutingPlan.from_entries(4, 1, src=[0, 0], expert=[0, 0], dst=[2, 3], tokens=[9, 3])
    after = RoutingPlan.from_entries(4, 1, src=[0, 0], expert=[0, 0], dst=[2, 3], tokens=[4, 8])
    moved = time_cost(after, two_by_two, unit_params)
    assert moved.t_comm == pytest.approx(time_cost(before, two_by_two, unit_params).t_comm, rel=1e-12)
