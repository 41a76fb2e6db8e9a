import numpy as np
import pytest

from app.errors import InfeasibleShapeError, PreconditionError
from app.schemas.planner import SearchSettings
from app.schemas.simulation import SchedulerKind
from app.schemas.trace import RoutingMatrix
from app.services.oracle_service import solve_exact
from app.services.planner_service import even_replication_layout, plan_layout, static_ep_layout
from app.services.scheduler_service import (
    EvenReplicationScheduler,
    LaerScheduler,
    OracleLayoutScheduler,
    StaticEPScheduler,
    get_scheduler,
    parse_scheduler_list,
)


@pytest.fixture
def routing():
    return RoutingMatrix(counts=[[9, 1, 0, 2], [7, 0, 3, 1], [8, 2, 2, 0], [6, 1, 1, 1]])


@pytest.mark.parametrize(
    "kind, expected",
    [
        (SchedulerKind.LAER, LaerScheduler),
        (SchedulerKind.STATIC_EP, StaticEPScheduler),
        (SchedulerKind.EVEN_REPLICATION, EvenReplicationScheduler),
        (SchedulerKind.ORACLE_LAYOUT, OracleLayoutScheduler),
        ("static_ep", StaticEPScheduler),
    ],
)
def test_factory(kind, expected, two_by_two, unit_params):
    scheduler = get_scheduler(kind, two_by_two, unit_params, 2, 4)
    assert isinstance(scheduler, expected)


def test_factory_rejects_infeasible_shape(two_by_two, unit_params):
    with pytest.raises(InfeasibleShapeError):
        get_scheduler(SchedulerKind.STATIC_EP, two_by_two, unit_params, 1, 5)


def test_static_ignores_routing(two_by_two, unit_params, routing):
    scheduler = get_scheduler(SchedulerKind.STATIC_EP, two_by_two, unit_params, 2, 4)
    first = scheduler.layout_for(0, 0, [], routing)
    later = scheduler.layout_for(0, 5, [routing] * 5, routing)
    assert first == later == static_ep_layout(4, 4, 2)


def test_even_replication(two_by_two, unit_params, routing):
    scheduler = get_scheduler(SchedulerKind.EVEN_REPLICATION, two_by_two, unit_params, 2, 4)
    assert scheduler.layout_for(0, 3, [routing], routing) == even_replication_layout(two_by_two, 4, 2)


class TestLaerScheduler:
    def test_first_iteration_uses_even_replication(self, two_by_two, unit_params, routing):
        scheduler = get_scheduler(SchedulerKind.LAER, two_by_two, unit_params, 2, 4)
        assert scheduler.layout_for(0, 0, [], routing) == even_replication_layout(two_by_two, 4, 2)

    def test_plans_from_history_only(self, two_by_two, unit_params, routing):
        search = SearchSettings(epsilon=4, seed=9)
        scheduler = get_scheduler(SchedulerKind.LAER, two_by_two, unit_params, 2, 4, search=search)
        other = RoutingMatrix(counts=np.ones((4, 4), dtype=int))

        layout = scheduler.layout_for(1, 1, [routing], other)
        expected = plan_layout(search.spec_for([routing], 1, 1), two_by_two, unit_params, 2)
        assert layout == expected
        assert scheduler.layout_for(1, 1, [routing], routing) == layout

    def test_step_seeds_differ(self):
        search = SearchSettings(seed=1)
        assert search.step_seed(0, 1) != search.step_seed(0, 2)
        assert search.step_seed(0, 1) != search.step_seed(1, 1)
        assert search.step_seed(0, 1) == SearchSettings(seed=1).step_seed(0, 1)


def test_oracle_scheduler_reads_current_routing(pair_topology, unit_params):
    current = RoutingMatrix(counts=[[5, 5], [5, 5]])
    scheduler = get_scheduler(SchedulerKind.ORACLE_LAYOUT, pair_topology, unit_params, 1, 2)
    layout = scheduler.layout_for(0, 0, [], current)
    assert layout == solve_exact(current, pair_topology, unit_params, 1).layout


class TestParseSchedulerList:
    def test_order_and_duplicates(self):
        assert parse_scheduler_list("laer, static_ep,laer") == [SchedulerKind.LAER, SchedulerKind.STATIC_EP]

    def test_unknown_name(self):
        with pytest.raises(PreconditionError, match="fastest"):
            parse_scheduler_list("laer,fastest")

    def test_empty(self):
        with pytest.raises(PreconditionError):
            parse_scheduler_list(" , ")
