"""
Load-adaptive expert re-layout planner

Replica allocation by priority queue on load per replica, topology-aware relocation
of replicas onto devices, the perturbed candidate search that picks the cheapest
layout under the time objective, and lite routing that splits each expert's tokens
across its replicas (same-node replicas first).
"""
import heapq
import logging
import math
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import InfeasibleShapeError, PreconditionError
from app.schemas.cost import CostParams
from app.schemas.planner import (
    CandidateOrigin,
    CandidateScheme,
    ExpertLayout,
    HistoryMode,
    LayoutCandidate,
    LayoutSearchResult,
    LayoutSearchSpec,
    ReplicaVector,
    RoutingPlan,
)
from app.schemas.topology import Topology
from app.schemas.trace import RoutingMatrix
from app.services.cost_service import time_cost
from app.services.trace_service import largest_remainder

logger = logging.getLogger(__name__)


def check_shape(n_devices: int, n_experts: int, capacity: int) -> None:
    """A layout exists iff C <= E <= N x C"""
    if n_devices < 1 or n_experts < 1 or capacity < 1:
        raise InfeasibleShapeError(f"N, E and C must be positive, got N={n_devices} E={n_experts} C={capacity}")
    if n_experts > n_devices * capacity:
        raise InfeasibleShapeError(
            f"{n_experts} experts do not fit on {n_devices} devices x {capacity} slots"
        )
    if capacity > n_experts:
        raise InfeasibleShapeError(
            f"capacity {capacity} exceeds the {n_experts} distinct experts a device can host"
        )


def as_load_vector(expert_loads: Sequence[int], n_experts: int) -> np.ndarray:
    loads = np.asarray(expert_loads)
    if loads.shape != (n_experts,):
        raise PreconditionError(f"expected {n_experts} expert loads, got shape {loads.shape}")
    if loads.size and (loads.min() < 0 or not np.all(loads == np.floor(loads))):
        raise PreconditionError("expert loads must be non-negative integers")
    return loads.astype(np.int64)


def allocation_objective(expert_loads: Sequence[int], replicas: Sequence[int]) -> float:
    """max_j load_j / rep_j"""
    return max(float(Fraction(int(load), int(rep))) for load, rep in zip(expert_loads, replicas))


@lru_cache(maxsize=None)
def _count_scale(n_devices: int) -> int:
    return math.lcm(*range(1, n_devices + 1))


def replica_allocation(expert_loads: Sequence[int], n_devices: int, n_experts: int, capacity: int) -> ReplicaVector:
    """
    Start from one replica each, then hand the remaining N x C - E slots one at a time
    to the expert with the largest load per replica. Experts at N replicas drop out
    Keys are load x lcm(1..N) / count, exact integers, so scaling every load leaves the result unchanged
    """
    check_shape(n_devices, n_experts, capacity)
    loads = as_load_vector(expert_loads, n_experts)
    scale = _count_scale(n_devices)

    counts = [1] * n_experts
    heap = [(-int(loads[j]) * scale, j) for j in range(n_experts) if n_devices > 1]
    heapq.heapify(heap)

    for _ in range(n_devices * capacity - n_experts):
        _, j = heapq.heappop(heap)
        counts[j] += 1
        if counts[j] < n_devices:
            heapq.heappush(heap, (-(int(loads[j]) * scale // counts[j]), j))

    return ReplicaVector(counts=counts, n_devices=n_devices, capacity=capacity)


def evenly_replicas(n_devices: int, n_experts: int, capacity: int) -> ReplicaVector:
    """floor(N x C / E) each; the remainder goes one apiece to the lowest-index experts"""
    check_shape(n_devices, n_experts, capacity)
    base, extra = divmod(n_devices * capacity, n_experts)
    counts = [base + (1 if j < extra else 0) for j in range(n_experts)]
    return ReplicaVector(counts=counts, n_devices=n_devices, capacity=capacity)


def perturb_replicas(replicas: ReplicaVector, rng: np.random.Generator) -> ReplicaVector:
    """Move one replica from a random expert with > 1 copy to a random other expert below N"""
    counts = list(replicas.counts)
    donors = [j for j, c in enumerate(counts) if c > 1]
    if not donors:
        return replicas
    donor = donors[int(rng.integers(len(donors)))]

    receivers = [j for j, c in enumerate(counts) if j != donor and c < replicas.n_devices]
    if not receivers:
        return replicas
    receiver = receivers[int(rng.integers(len(receivers)))]

    counts[donor] -= 1
    counts[receiver] += 1
    return ReplicaVector(counts=counts, n_devices=replicas.n_devices, capacity=replicas.capacity)


class _Placement:
    """
    Mutable relocation state: replica matrix, device loads, free slots, per-node replica counts
    Devices with a free slot sit in one (load, device) heap per node
    """

    def __init__(self, n_experts: int, topology: Topology, capacity: int, per_replica: np.ndarray):
        self.n_nodes = topology.n_nodes
        self.node_of = topology.node_index()
        self.placement = np.zeros((n_experts, topology.n_devices), dtype=bool)
        self.device_load = np.zeros(topology.n_devices, dtype=np.float64)
        self.free = np.full(topology.n_devices, capacity, dtype=np.int64)
        self.node_replicas = np.zeros((n_experts, topology.n_nodes), dtype=np.int64)
        self.per_replica = per_replica
        self.open_devices: List[List[Tuple[float, int]]] = []
        self.rebuild_heaps()

    def rebuild_heaps(self) -> None:
        self.open_devices = [[] for _ in range(self.n_nodes)]
        for device in np.flatnonzero(self.free > 0):
            device = int(device)
            self.open_devices[self.node_of[device]].append((float(self.device_load[device]), device))
        for heap in self.open_devices:
            heapq.heapify(heap)

    def add(self, expert: int, device: int) -> None:
        self.placement[expert, device] = True
        self.device_load[device] += self.per_replica[expert]
        self.free[device] -= 1
        self.node_replicas[expert, self.node_of[device]] += 1

    def remove(self, expert: int, device: int) -> None:
        self.placement[expert, device] = False
        self.device_load[device] -= self.per_replica[expert]
        self.free[device] += 1
        self.node_replicas[expert, self.node_of[device]] -= 1

    def _round(self, expert: int, parked: List[Tuple[float, int]]) -> List[Tuple[float, int, int]]:
        """
        Nodes that still have a free device without `expert` and hold the fewest copies of it,
        keyed by their least-loaded such device. Devices hosting `expert` move to `parked`
        """
        candidates = []
        for node, heap in enumerate(self.open_devices):
            while heap and self.placement[expert, heap[0][1]]:
                parked.append(heapq.heappop(heap))
            if heap:
                candidates.append((int(self.node_replicas[expert, node]), heap[0], node))
        if not candidates:
            return []
        fewest = min(count for count, _, _ in candidates)
        round_nodes = [(load, device, node) for count, (load, device), node in candidates if count == fewest]
        heapq.heapify(round_nodes)
        return round_nodes

    def place_replicas(self, expert: int, count: int) -> None:
        """
        Each replica takes the least-loaded free device (lowest index on ties) within the nodes
        holding the fewest copies of `expert`. A node leaves the round once it gains a copy,
        so nodes fill round by round
        """
        parked: List[Tuple[float, int]] = []
        round_nodes: List[Tuple[float, int, int]] = []
        for _ in range(count):
            if not round_nodes:
                round_nodes = self._round(expert, parked)
            if not round_nodes:
                self.add(expert, self.swap_in(expert))
                self.rebuild_heaps()
                parked = []
                continue

            _, device, node = heapq.heappop(round_nodes)
            heapq.heappop(self.open_devices[node])
            self.add(expert, device)
            if self.free[device] > 0:
                parked.append((float(self.device_load[device]), device))

        for entry in parked:
            heapq.heappush(self.open_devices[self.node_of[entry[1]]], entry)

    def swap_in(self, expert: int) -> int:
        """
        Every free slot sits on a device already hosting `expert`: move some resident x
        from a full device m onto the free device k, then return m for `expert`
        """
        free_devices = np.flatnonzero(self.free > 0)
        k = int(free_devices[np.argmin(self.device_load[free_devices])])
        full_devices = np.flatnonzero(~self.placement[expert])
        m = int(full_devices[np.argmin(self.device_load[full_devices])])
        movable = np.flatnonzero(self.placement[:, m] & ~self.placement[:, k])
        x = int(movable[np.argmin(self.per_replica[movable])])

        logger.debug(f"Relocation swap: expert {x} moves {m}->{k} to make room for expert {expert}")
        self.remove(x, m)
        self.add(x, k)
        return m


def expert_relocation(
    replicas: ReplicaVector,
    expert_loads: Sequence[int],
    topology: Topology,
    capacity: int,
) -> ExpertLayout:
    """
    Place replicas in descending per-replica load (expert index breaks ties)
    Each replica lands on the least-loaded free device within the nodes holding the fewest
    copies of its expert; when no node qualifies a swap opens a slot
    """
    n_experts = replicas.n_experts
    if replicas.n_devices != topology.n_devices:
        raise PreconditionError(
            f"replica vector is for {replicas.n_devices} devices, topology has {topology.n_devices}"
        )
    if replicas.capacity != capacity:
        raise PreconditionError(f"replica vector capacity {replicas.capacity} != {capacity}")
    check_shape(topology.n_devices, n_experts, capacity)
    loads = as_load_vector(expert_loads, n_experts)

    counts = np.asarray(replicas.counts, dtype=np.int64)
    per_replica = loads / counts
    state = _Placement(n_experts, topology, capacity, per_replica)

    order = np.lexsort((np.arange(n_experts), -per_replica))
    for expert in order:
        state.place_replicas(int(expert), int(counts[expert]))

    return ExpertLayout(placement=state.placement.astype(np.int64))


def static_ep_layout(n_devices: int, n_experts: int, capacity: int) -> ExpertLayout:
    """Global slot i*C + s on device i hosts expert (i*C + s) mod E"""
    check_shape(n_devices, n_experts, capacity)
    slots = np.arange(n_devices * capacity)
    placement = np.zeros((n_experts, n_devices), dtype=np.int64)
    placement[slots % n_experts, slots // capacity] = 1
    return ExpertLayout(placement=placement)


def even_replication_layout(topology: Topology, n_experts: int, capacity: int) -> ExpertLayout:
    """Even replica counts placed by relocation under uniform loads"""
    replicas = evenly_replicas(topology.n_devices, n_experts, capacity)
    return expert_relocation(replicas, np.ones(n_experts, dtype=np.int64), topology, capacity)


def aggregate_history(
    history: Sequence[RoutingMatrix],
    mode: HistoryMode = HistoryMode.LATEST,
    ema_decay: float = 0.5,
) -> RoutingMatrix:
    """
    Collapse a layer's routing history into one matrix
    ema weights each matrix by (1 - decay)^age and rounds rows back to the latest row totals
    """
    if not history:
        raise PreconditionError("planning needs at least one routing matrix of history")
    latest = history[-1]
    if mode == HistoryMode.LATEST or len(history) == 1:
        return latest

    shape = latest.counts.shape
    if any(m.counts.shape != shape for m in history):
        raise PreconditionError("routing history matrices must share one (N, E) shape")

    ages = np.arange(len(history) - 1, -1, -1)
    weights = (1.0 - ema_decay) ** ages
    stacked = np.stack([m.counts for m in history]).astype(np.float64)
    averaged = np.tensordot(weights / weights.sum(), stacked, axes=1)

    counts = np.zeros(shape, dtype=np.int64)
    for i, row_total in enumerate(latest.counts.sum(axis=1)):
        counts[i] = largest_remainder(averaged[i], int(row_total))[0]
    return RoutingMatrix(counts=counts)


def lite_routing(routing: RoutingMatrix, layout: ExpertLayout, topology: Topology) -> RoutingPlan:
    """
    Split R[i, j] evenly over expert j's replicas on node(i), or over all its replicas
    when node(i) has none. Floor split; leftover tokens go one each to the lowest destinations
    """
    n_devices, n_experts = routing.n_devices, routing.n_experts
    if layout.n_devices != n_devices or topology.n_devices != n_devices:
        raise PreconditionError(
            f"routing has {n_devices} devices, layout {layout.n_devices}, topology {topology.n_devices}"
        )
    if layout.n_experts != n_experts:
        raise PreconditionError(f"routing has {n_experts} experts, layout has {layout.n_experts}")

    per_node = topology.devices_per_node
    node_of = topology.node_index()
    counts = routing.counts
    src_parts, expert_parts, dst_parts, token_parts = [], [], [], []

    def emit(expert: int, src: np.ndarray, dst: np.ndarray, tokens: np.ndarray) -> None:
        src_parts.append(src.ravel())
        dst_parts.append(dst.ravel())
        token_parts.append(tokens.ravel())
        expert_parts.append(np.full(tokens.size, expert, dtype=np.int64))

    for expert in range(n_experts):
        demand = counts[:, expert]
        if not demand.any():
            continue
        hosts = layout.hosts(expert)
        if hosts.size == 0:
            raise PreconditionError(f"expert {expert} has load but is hosted nowhere")

        host_node = node_of[hosts]
        node_replicas = np.bincount(host_node, minlength=topology.n_nodes)

        # same-node share: host h serves every device of node(h)
        rank = np.arange(hosts.size) - np.searchsorted(host_node, host_node, side="left")
        local_src = host_node[:, None] * per_node + np.arange(per_node)[None, :]
        local_demand = demand[local_src]
        split = node_replicas[host_node][:, None]
        local_tokens = local_demand // split + (rank[:, None] < local_demand % split)
        emit(expert, local_src, np.broadcast_to(hosts[:, None], local_src.shape), local_tokens)

        # devices on nodes without a replica spread over all replicas
        remote_src = np.flatnonzero((node_replicas[node_of] == 0) & (demand > 0))
        if remote_src.size:
            remote_demand = demand[remote_src][:, None]
            order = np.arange(hosts.size)[None, :]
            remote_tokens = remote_demand // hosts.size + (order < remote_demand % hosts.size)
            emit(
                expert,
                np.broadcast_to(remote_src[:, None], remote_tokens.shape),
                np.broadcast_to(hosts[None, :], remote_tokens.shape),
                remote_tokens,
            )

    if not token_parts:
        return RoutingPlan.empty(n_devices, n_experts)
    return RoutingPlan.from_entries(
        n_devices,
        n_experts,
        np.concatenate(src_parts),
        np.concatenate(expert_parts),
        np.concatenate(dst_parts),
        np.concatenate(token_parts),
    )


def plan_layout_detailed(
    spec: LayoutSearchSpec,
    topology: Topology,
    params: CostParams,
    capacity: int,
) -> LayoutSearchResult:
    """
    Score the enabled base schemes (proportional, even) and epsilon - 2 seeded perturbations
    of randomly chosen set members; keep the cheapest (earliest on ties)
    """
    routing = aggregate_history(spec.history, spec.history_mode, spec.ema_decay)
    if routing.n_devices != topology.n_devices:
        raise PreconditionError(
            f"routing history spans {routing.n_devices} devices but topology has {topology.n_devices}"
        )
    n_devices, n_experts = topology.n_devices, routing.n_experts
    loads = routing.expert_loads()
    rng = np.random.default_rng(spec.seed)

    replica_set: List[Tuple[CandidateOrigin, ReplicaVector]] = []
    if CandidateScheme.PROPORTIONAL in spec.schemes:
        replica_set.append(
            (CandidateOrigin.PROPORTIONAL, replica_allocation(loads, n_devices, n_experts, capacity))
        )
    if CandidateScheme.EVEN in spec.schemes:
        replica_set.append((CandidateOrigin.EVEN, evenly_replicas(n_devices, n_experts, capacity)))
    for _ in range(spec.epsilon - 2):
        _, base = replica_set[int(rng.integers(len(replica_set)))]
        replica_set.append((CandidateOrigin.PERTURBED, perturb_replicas(base, rng)))

    scored: Dict[Tuple[int, ...], Tuple[ExpertLayout, RoutingPlan, object]] = {}
    candidates: List[LayoutCandidate] = []
    chosen = 0
    for index, (origin, replicas) in enumerate(replica_set):
        key = tuple(replicas.counts)
        if key not in scored:
            layout = expert_relocation(replicas, loads, topology, capacity)
            plan = lite_routing(routing, layout, topology)
            scored[key] = (layout, plan, time_cost(plan, topology, params))
        cost = scored[key][2]
        candidates.append(LayoutCandidate(origin=origin, replicas=list(key), t_total=cost.t_total))
        if cost.t_total < candidates[chosen].t_total:
            chosen = index

    layout, plan, cost = scored[tuple(candidates[chosen].replicas)]
    logger.debug(
        f"Layout search over {len(candidates)} candidates: "
        + ", ".join(f"{c.origin.value}={c.t_total:.6g}" for c in candidates)
        + f"; chose #{chosen} ({candidates[chosen].origin.value})"
    )
    return LayoutSearchResult(
        layout=layout, plan=plan, cost=cost, candidates=candidates, chosen=chosen, routing=routing
    )


def plan_layout(spec: LayoutSearchSpec, topology: Topology, params: CostParams, capacity: int) -> ExpertLayout:
    return plan_layout_detailed(spec, topology, params, capacity).layout


def validate_layout(layout: ExpertLayout, n_devices: int, n_experts: int, capacity: int) -> None:
    """Shape and capacity re-check; the model validator already guarantees hosting and binarity"""
    if (layout.n_experts, layout.n_devices) != (n_experts, n_devices):
        raise PreconditionError(
            f"layout is {layout.n_experts}x{layout.n_devices}, expected {n_experts}x{n_devices}"
        )
    if layout.capacity != capacity:
        raise PreconditionError(f"layout holds {layout.capacity} experts per device, expected {capacity}")


def validate_plan(plan: RoutingPlan, routing: RoutingMatrix, layout: ExpertLayout) -> None:
    """Token conservation against R and hosting against A"""
    if (plan.n_devices, plan.n_experts) != (routing.n_devices, routing.n_experts):
        raise PreconditionError("routing plan and routing matrix disagree on (N, E)")
    if not np.array_equal(plan.routed_counts(), routing.counts):
        raise PreconditionError("routing plan does not conserve tokens")
    if plan.tokens.size and not layout.placement[plan.expert, plan.dst].all():
        raise PreconditionError("routing plan sends tokens to a device not hosting the expert")
