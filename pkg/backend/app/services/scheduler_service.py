"""
Pattern: Strategy (Behavioral)
Interchangeable layout schedulers driven by the simulator, one instance per (layer, scheduler) stream
"""
from abc import ABC, abstractmethod
from typing import Optional, Sequence
import logging

from app.errors import PreconditionError
from app.schemas.cost import CostParams
from app.schemas.oracle import OracleBudget
from app.schemas.planner import ExpertLayout, SearchSettings
from app.schemas.simulation import SchedulerKind
from app.schemas.topology import Topology
from app.schemas.trace import RoutingMatrix
from app.services.oracle_service import solve_exact
from app.services.planner_service import (
    check_shape,
    even_replication_layout,
    plan_layout,
    static_ep_layout,
)

logger = logging.getLogger(__name__)


class LayoutScheduler(ABC):
    """
    Pattern: Strategy (Behavioral)
    Chooses the expert layout applied at one (layer, iteration)
    """
    kind: SchedulerKind

    def __init__(self, topology: Topology, params: CostParams, capacity: int, n_experts: int):
        check_shape(topology.n_devices, n_experts, capacity)
        self.topology = topology
        self.params = params
        self.capacity = capacity
        self.n_experts = n_experts

    @abstractmethod
    def layout_for(
        self,
        layer: int,
        iteration: int,
        history: Sequence[RoutingMatrix],
        current: RoutingMatrix,
    ) -> ExpertLayout:
        """
        history holds this layer's routing for iterations < iteration;
        only the non-causal oracle scheduler may look at `current`
        """
        pass


class StaticEPScheduler(LayoutScheduler):
    """
    Pattern: Strategy (Behavioral) - Concrete Strategy
    Fixed block placement, never re-laid out
    """
    kind = SchedulerKind.STATIC_EP

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._layout = static_ep_layout(self.topology.n_devices, self.n_experts, self.capacity)

    def layout_for(self, layer, iteration, history, current) -> ExpertLayout:
        return self._layout


class EvenReplicationScheduler(LayoutScheduler):
    """
    Pattern: Strategy (Behavioral) - Concrete Strategy
    Every expert replicated evenly, placed once
    """
    kind = SchedulerKind.EVEN_REPLICATION

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._layout = even_replication_layout(self.topology, self.n_experts, self.capacity)

    def layout_for(self, layer, iteration, history, current) -> ExpertLayout:
        return self._layout


class LaerScheduler(LayoutScheduler):
    """
    Pattern: Strategy (Behavioral) - Concrete Strategy
    Load-adaptive re-layout: plans iteration t from the layer's routing before t,
    falling back to even replication while no history exists
    """
    kind = SchedulerKind.LAER

    def __init__(self, *args, search: Optional[SearchSettings] = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.search = search or SearchSettings()
        self._initial = even_replication_layout(self.topology, self.n_experts, self.capacity)

    def layout_for(self, layer, iteration, history, current) -> ExpertLayout:
        if not history:
            return self._initial
        spec = self.search.spec_for(list(history), layer, iteration)
        return plan_layout(spec, self.topology, self.params, self.capacity)


class OracleLayoutScheduler(LayoutScheduler):
    """
    Pattern: Strategy (Behavioral) - Concrete Strategy
    Clairvoyant upper bound: exact layout for the current iteration's routing (non-causal)
    """
    kind = SchedulerKind.ORACLE_LAYOUT

    def __init__(self, *args, budget: Optional[OracleBudget] = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.budget = budget or OracleBudget()

    def layout_for(self, layer, iteration, history, current) -> ExpertLayout:
        return solve_exact(current, self.topology, self.params, self.capacity, self.budget).layout


_SCHEDULERS = {
    SchedulerKind.LAER: LaerScheduler,
    SchedulerKind.STATIC_EP: StaticEPScheduler,
    SchedulerKind.EVEN_REPLICATION: EvenReplicationScheduler,
    SchedulerKind.ORACLE_LAYOUT: OracleLayoutScheduler,
}


def get_scheduler(
    kind: SchedulerKind,
    topology: Topology,
    params: CostParams,
    capacity: int,
    n_experts: int,
    search: Optional[SearchSettings] = None,
    budget: Optional[OracleBudget] = None,
) -> LayoutScheduler:
    """
    Pattern: Factory (Creational)
    Build the scheduler strategy for `kind`
    """
    scheduler_class = _SCHEDULERS.get(SchedulerKind(kind))
    if scheduler_class is None:
        raise PreconditionError(f"unknown scheduler {kind}")
    if scheduler_class is LaerScheduler:
        return LaerScheduler(topology, params, capacity, n_experts, search=search)
    if scheduler_class is OracleLayoutScheduler:
        return OracleLayoutScheduler(topology, params, capacity, n_experts, budget=budget)
    return scheduler_class(topology, params, capacity, n_experts)


def parse_scheduler_list(value: str) -> list:
    """'laer,static_ep' -> [SchedulerKind.LAER, SchedulerKind.STATIC_EP]; duplicates dropped"""
    kinds = []
    for name in (part.strip() for part in value.split(",")):
        if not name:
            continue
        try:
            kind = SchedulerKind(name)
        except ValueError:
            known = ", ".join(k.value for k in SchedulerKind)
            raise PreconditionError(f"unknown scheduler '{name}' (known: {known})")
        if kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise PreconditionError("at least one scheduler is required")
    return kinds
