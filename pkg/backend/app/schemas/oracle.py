"""
Pattern: Builder (Creational)
Exhaustive-search budget and results
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.schemas.cost import CostBreakdown
from app.schemas.planner import ExpertLayout, RoutingPlan


class OracleBudget(BaseModel):
    """Enumeration limits; exceeding them yields a flagged best-found result"""
    model_config = {"frozen": True}

    max_layout_candidates: int = Field(default=50_000, gt=0)
    max_token_granularity: int = Field(
        default=1, gt=0, description="Upper bound on g; tokens are routed in multiples of g"
    )
    max_routing_levels: int = Field(default=100_000, gt=0)


class ExactAllocation(BaseModel):
    replicas: List[int]
    objective: float


class ExactSolution(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    layout: ExpertLayout
    plan: RoutingPlan
    cost: CostBreakdown
    t_total: float
    granularity: int
    layouts_examined: int
    budget_exceeded: bool = False


class GapReport(BaseModel):
    instance: Dict[str, Any]
    greedy_cost: float
    exact_cost: float
    gap: Optional[float]
    budget_exceeded: bool = False
