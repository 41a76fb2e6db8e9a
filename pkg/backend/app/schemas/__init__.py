"""Schemas package initialization"""

from app.schemas.planner import ExpertLayout, ReplicaVector, RoutingPlan
from app.schemas.topology import TOPOLOGY_PRESETS, Topology
from app.schemas.trace import RoutingMatrix, TraceGenSpec, TraceRecord

__all__ = [
    "ExpertLayout",
    "ReplicaVector",
    "RoutingMatrix",
    "RoutingPlan",
    "TOPOLOGY_PRESETS",
    "Topology",
    "TraceGenSpec",
    "TraceRecord",
]
