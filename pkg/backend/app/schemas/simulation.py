"""
Simulation models: scheduler kinds, per-record costs, aggregate report, sweep table
"""
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class SchedulerKind(str, Enum):
    LAER = "laer"
    STATIC_EP = "static_ep"
    EVEN_REPLICATION = "even_replication"
    ORACLE_LAYOUT = "oracle_layout"


class SimRecord(BaseModel):
    """Cost of one (iteration, layer, scheduler)"""
    iteration: int = Field(..., ge=0)
    layer: int = Field(..., ge=0)
    scheduler: SchedulerKind
    t_comm: float
    t_comp: float
    t_total: float
    max_recv_tokens: int = Field(..., ge=0)
    ideal_tokens: float = Field(..., ge=0)
    total_tokens: int = Field(..., ge=0)

    @property
    def balance_ratio(self) -> float:
        """max_recv / ideal, 1 for an empty record"""
        if self.total_tokens == 0:
            return 1.0
        return self.max_recv_tokens / self.ideal_tokens


class BalanceMetrics(BaseModel):
    mean: float
    p95: float


class SimReport(BaseModel):
    schedulers: List[SchedulerKind]
    n_devices: int
    n_experts: int
    capacity: int
    records: List[SimRecord]
    mean_iteration_time: Dict[str, float]
    speedup: Dict[str, Dict[str, Optional[float]]]
    mean_balance_ratio: Dict[str, float]

    def records_for(self, scheduler: SchedulerKind) -> List[SimRecord]:
        return [r for r in self.records if r.scheduler == scheduler]


class ScalabilityRow(BaseModel):
    n_devices: int
    laer_time: float
    baseline_time: float
    speedup: Optional[float] = Field(..., description="None when laer took zero time")


class ScalabilityTable(BaseModel):
    baseline: SchedulerKind
    rows: List[ScalabilityRow]
    coefficient_of_variation: float
