"""
Exact reference solver for tiny instances

exact_allocation enumerates every replica vector. solve_exact enumerates every layout
(each device independently picks a C-subset of experts) and, per layout, finds the
optimal integral routing: for each cap M on tokens received per device the cheapest
routing is a min-cost flow, and total time over M is convex, so the scan stops at the
first strict increase. Layouts are solved in order of a cheap lower bound and the search
ends when that bound reaches the best time found.
"""
import logging
import math
from collections import deque
from fractions import Fraction
from itertools import combinations, product
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import OracleBoundsError, PreconditionError
from app.schemas.cost import CommAggregation, CostParams
from app.schemas.oracle import ExactAllocation, ExactSolution, GapReport, OracleBudget
from app.schemas.planner import ExpertLayout, LayoutSearchSpec, RoutingPlan
from app.schemas.topology import Topology
from app.schemas.trace import RoutingMatrix
from app.services.cost_service import ALL_TO_ALL_HOPS, time_cost
from app.services.planner_service import as_load_vector, check_shape, plan_layout_detailed

logger = logging.getLogger(__name__)

ALLOCATION_MAX_SLOTS = 12
ALLOCATION_MAX_EXPERTS = 6
LAYOUT_MAX_DEVICES = 4
LAYOUT_MAX_EXPERTS = 4
LAYOUT_MAX_CAPACITY = 2


def _compositions(total: int, parts: int, low: int, high: int) -> Iterator[Tuple[int, ...]]:
    """Ordered splits of `total` into `parts` integers within [low, high], lexicographic"""
    if parts == 1:
        if low <= total <= high:
            yield (total,)
        return
    for first in range(low, high + 1):
        rest = total - first
        if rest < low * (parts - 1):
            break
        if rest > high * (parts - 1):
            continue
        for tail in _compositions(rest, parts - 1, low, high):
            yield (first,) + tail


def exact_allocation(expert_loads: Sequence[int], n_devices: int, n_experts: int, capacity: int) -> ExactAllocation:
    """Replica vector minimising max_j load_j / rep_j by exhaustive search"""
    check_shape(n_devices, n_experts, capacity)
    if n_devices * capacity > ALLOCATION_MAX_SLOTS or n_experts > ALLOCATION_MAX_EXPERTS:
        raise OracleBoundsError(
            f"exact allocation needs N x C <= {ALLOCATION_MAX_SLOTS} and E <= {ALLOCATION_MAX_EXPERTS}, "
            f"got N x C = {n_devices * capacity}, E = {n_experts}"
        )
    loads = [int(x) for x in as_load_vector(expert_loads, n_experts)]

    best: Optional[Tuple[Fraction, Tuple[int, ...]]] = None
    for replicas in _compositions(n_devices * capacity, n_experts, 1, n_devices):
        value = max(Fraction(load, rep) for load, rep in zip(loads, replicas))
        if best is None or value < best[0]:
            best = (value, replicas)

    return ExactAllocation(replicas=list(best[1]), objective=float(best[0]))


class _FlowNetwork:
    """Successive shortest paths on integer costs; residual graph as edge lists"""

    def __init__(self, n_nodes: int):
        self.graph: List[List[List[int]]] = [[] for _ in range(n_nodes)]

    def add_edge(self, u: int, v: int, capacity: int, cost: int) -> Tuple[int, int]:
        self.graph[u].append([v, capacity, cost, len(self.graph[v])])
        self.graph[v].append([u, 0, -cost, len(self.graph[u]) - 1])
        return u, len(self.graph[u]) - 1

    def flow_on(self, handle: Tuple[int, int]) -> int:
        u, index = handle
        v, _, _, rev = self.graph[u][index]
        return self.graph[v][rev][1]

    def min_cost_flow(self, source: int, sink: int, required: int) -> Tuple[int, int]:
        """Push up to `required` units; returns (flow, cost)"""
        n_nodes = len(self.graph)
        flow = cost = 0
        while flow < required:
            dist = [math.inf] * n_nodes
            parent: List[Optional[Tuple[int, int]]] = [None] * n_nodes
            in_queue = [False] * n_nodes
            dist[source] = 0
            queue = deque([source])
            while queue:
                u = queue.popleft()
                in_queue[u] = False
                for index, (v, capacity, edge_cost, _) in enumerate(self.graph[u]):
                    if capacity > 0 and dist[u] + edge_cost < dist[v]:
                        dist[v] = dist[u] + edge_cost
                        parent[v] = (u, index)
                        if not in_queue[v]:
                            in_queue[v] = True
                            queue.append(v)
            if dist[sink] == math.inf:
                break

            push = required - flow
            v = sink
            while v != source:
                u, index = parent[v]
                push = min(push, self.graph[u][index][1])
                v = u
            v = sink
            while v != source:
                u, index = parent[v]
                edge = self.graph[u][index]
                edge[1] -= push
                self.graph[v][edge[3]][1] += push
                v = u
            flow += push
            cost += push * dist[sink]
        return flow, cost


def _enumerate_layouts(topology: Topology, n_experts: int, capacity: int) -> Iterator[np.ndarray]:
    """
    Every E x N placement with every expert hosted
    Devices are not interchangeable: routing ties tokens to their source device
    """
    subsets = list(combinations(range(n_experts), capacity))
    for choice in product(range(len(subsets)), repeat=topology.n_devices):
        placement = np.zeros((n_experts, topology.n_devices), dtype=np.int64)
        for device, subset_index in enumerate(choice):
            placement[list(subsets[subset_index]), device] = 1
        if placement.sum(axis=1).min() >= 1:
            yield placement


def _integer_link_costs(topology: Topology) -> Tuple[np.ndarray, int]:
    """
    Per-token 1/bw between every device pair scaled to integers
    Returns (N x N integer costs, scale) with cost / scale == 1 / bw
    """
    intra, inter = Fraction(1) / Fraction(topology.b_intra), Fraction(1) / Fraction(topology.b_inter)
    scale = math.lcm(intra.denominator, inter.denominator)
    node_of = topology.node_index()
    same_node = node_of[:, None] == node_of[None, :]
    costs = np.where(same_node, int(intra * scale), int(inter * scale)).astype(object)
    np.fill_diagonal(costs, 0)
    return costs, scale


def _token_granularity(counts: np.ndarray, bound: int) -> int:
    """Largest divisor of gcd(R) not above `bound`; 1 when R is all zero"""
    divisor = int(np.gcd.reduce(counts.ravel())) if counts.any() else 1
    for g in range(min(bound, divisor), 0, -1):
        if divisor % g == 0:
            return g
    return 1


class _LayoutRouting:
    """Optimal routing for one fixed layout at token granularity `units`"""

    def __init__(self, units: np.ndarray, placement: np.ndarray, link_costs: np.ndarray):
        self.units = units
        self.placement = placement
        self.link_costs = link_costs
        n_devices, n_experts = units.shape
        self.pairs = [(i, j) for i in range(n_devices) for j in range(n_experts) if units[i, j] > 0]
        self.total = int(units.sum())

    def uncapacitated_cost(self) -> int:
        """Every (i, j) to its cheapest host"""
        total = 0
        for i, j in self.pairs:
            hosts = np.flatnonzero(self.placement[j])
            total += int(self.units[i, j]) * min(self.link_costs[i, k] for k in hosts)
        return total

    def solve(self, cap: int) -> Tuple[bool, int, Dict[Tuple[int, int, int], int]]:
        """Min-cost routing with at most `cap` units received per device"""
        n_devices = self.units.shape[0]
        source, sink = 0, 1
        pair_base, device_base = 2, 2 + len(self.pairs)
        network = _FlowNetwork(device_base + n_devices)

        handles = {}
        for p, (i, j) in enumerate(self.pairs):
            network.add_edge(source, pair_base + p, int(self.units[i, j]), 0)
            for k in np.flatnonzero(self.placement[j]):
                handles[(i, j, int(k))] = network.add_edge(pair_base + p, device_base + int(k), self.total, int(self.link_costs[i, k]))
        for k in range(n_devices):
            network.add_edge(device_base + k, sink, cap, 0)

        flow, cost = network.min_cost_flow(source, sink, self.total)
        if flow < self.total:
            return False, 0, {}
        routed = {key: network.flow_on(h) for key, h in handles.items()}
        return True, cost, {key: f for key, f in routed.items() if f > 0}

    def min_feasible_cap(self) -> int:
        n_devices = self.units.shape[0]
        low, high = -(-self.total // n_devices), self.total
        while low < high:
            middle = (low + high) // 2
            if self.solve(middle)[0]:
                high = middle
            else:
                low = middle + 1
        return low


def solve_exact(
    routing: RoutingMatrix,
    topology: Topology,
    params: CostParams,
    capacity: int,
    budget: Optional[OracleBudget] = None,
) -> ExactSolution:
    """Global minimiser of the time objective over layouts and integral routings"""
    budget = budget or OracleBudget()
    n_devices, n_experts = routing.n_devices, routing.n_experts
    if n_devices != topology.n_devices:
        raise PreconditionError(f"routing spans {n_devices} devices but topology has {topology.n_devices}")
    check_shape(n_devices, n_experts, capacity)
    if n_devices > LAYOUT_MAX_DEVICES or n_experts > LAYOUT_MAX_EXPERTS or capacity > LAYOUT_MAX_CAPACITY:
        raise OracleBoundsError(
            f"exact search needs N <= {LAYOUT_MAX_DEVICES}, E <= {LAYOUT_MAX_EXPERTS}, C <= {LAYOUT_MAX_CAPACITY}, "
            f"got N={n_devices} E={n_experts} C={capacity}"
        )
    if params.comm_aggregation != CommAggregation.SERIAL:
        raise PreconditionError("exact routing is defined for the serial communication sum only")

    granularity = _token_granularity(routing.counts, budget.max_token_granularity)
    units = routing.counts // granularity
    link_costs, scale = _integer_link_costs(topology)
    comm_per_unit = Fraction(ALL_TO_ALL_HOPS) * Fraction(params.v_comm) * granularity / scale
    comp_per_unit = Fraction(params.comp_multiplier) * Fraction(params.v_comp) * granularity / Fraction(params.b_comp)

    budget_exceeded = False
    queue: List[Tuple[Fraction, int, int, _LayoutRouting]] = []
    for placement in _enumerate_layouts(topology, n_experts, capacity):
        if len(queue) >= budget.max_layout_candidates:
            budget_exceeded = True
            break
        router = _LayoutRouting(units, placement, link_costs)
        unconstrained = router.uncapacitated_cost()
        floor = comm_per_unit * unconstrained + comp_per_unit * -(-router.total // n_devices)
        queue.append((floor, len(queue), unconstrained, router))
    examined = len(queue)
    # best-first: once a floor reaches the incumbent no later layout can beat it
    queue.sort(key=lambda item: (item[0], item[1]))

    best: Optional[Tuple[Fraction, np.ndarray, Dict[Tuple[int, int, int], int]]] = None
    for floor, _, unconstrained, router in queue:
        if best is not None and floor >= best[0]:
            break
        placement = router.placement
        if router.total == 0:
            best = (Fraction(0), placement, {})
            continue

        cap = router.min_feasible_cap()
        previous: Optional[Fraction] = None
        levels = 0
        while cap <= router.total:
            levels += 1
            if levels > budget.max_routing_levels:
                budget_exceeded = True
                break
            _, comm_units, routed = router.solve(cap)
            received = np.zeros(n_devices, dtype=np.int64)
            for (_, _, k), f in routed.items():
                received[k] += f
            achieved = comm_per_unit * comm_units + comp_per_unit * int(received.max())
            if best is None or achieved < best[0]:
                best = (achieved, placement, routed)

            bound = comm_per_unit * comm_units + comp_per_unit * cap
            if comm_units == unconstrained or (previous is not None and bound > previous):
                break
            previous = bound
            cap += 1

    if budget_exceeded:
        logger.warning(f"Exact search hit its budget after {examined} layouts; returning best found")

    _, placement, routed = best
    if routed:
        keys = np.array(list(routed.keys()), dtype=np.int64)
        tokens = np.array(list(routed.values()), dtype=np.int64) * granularity
        plan = RoutingPlan.from_entries(n_devices, n_experts, keys[:, 0], keys[:, 1], keys[:, 2], tokens)
    else:
        plan = RoutingPlan.empty(n_devices, n_experts)

    cost = time_cost(plan, topology, params)
    return ExactSolution(
        layout=ExpertLayout(placement=placement),
        plan=plan,
        cost=cost,
        t_total=cost.t_total,
        granularity=granularity,
        layouts_examined=examined,
        budget_exceeded=budget_exceeded,
    )


def gap_report(
    routing: RoutingMatrix,
    topology: Topology,
    params: CostParams,
    capacity: int,
    seed: int,
    epsilon: int = 2,
    budget: Optional[OracleBudget] = None,
) -> GapReport:
    """Greedy search on R itself against the exact optimum; gap = greedy / exact - 1"""
    greedy = plan_layout_detailed(
        LayoutSearchSpec(epsilon=epsilon, seed=seed, history=[routing]), topology, params, capacity
    )
    exact = solve_exact(routing, topology, params, capacity, budget)

    greedy_cost, exact_cost = greedy.cost.t_total, exact.t_total
    if exact_cost > 0:
        gap: Optional[float] = greedy_cost / exact_cost - 1.0
    else:
        gap = 0.0 if greedy_cost == 0 else None

    instance: Dict[str, Any] = {
        "n_devices": routing.n_devices,
        "n_experts": routing.n_experts,
        "capacity": capacity,
        "R": routing.counts.astype(int).tolist(),
    }
    return GapReport(
        instance=instance,
        greedy_cost=greedy_cost,
        exact_cost=exact_cost,
        gap=gap,
        budget_exceeded=exact.budget_exceeded,
    )
