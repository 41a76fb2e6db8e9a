"""
Pattern: Builder (Creational)
Run configuration tree read from one JSON document; CLI flags override single fields
"""
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.cost import CommAggregation
from app.schemas.oracle import OracleBudget
from app.schemas.planner import CandidateScheme, HistoryMode, canonical_schemes
from app.schemas.topology import Topology
from app.schemas.trace import MAX_SEED


class CostBlock(BaseModel):
    """Per-token volumes; derived from model shapes when omitted"""
    v_comm: Optional[float] = Field(default=None, gt=0, description="Bytes per token per hop")
    v_comp: Optional[float] = Field(default=None, gt=0, description="Forward FLOPs per token")
    b_comp: float = Field(default=312e12, gt=0, description="FLOPs/second per device")
    f_ckpt: Literal[0, 1] = 0
    comm_aggregation: CommAggregation = CommAggregation.SERIAL


class ModelBlock(BaseModel):
    n_experts: int = Field(..., gt=0)
    capacity: int = Field(..., gt=0)
    hidden: Optional[int] = Field(default=None, gt=0)
    intermediate: Optional[int] = Field(default=None, gt=0)
    topk: int = Field(default=2, gt=0)
    tokens_per_device: int = Field(default=16384, gt=0)
    bytes_per_element: int = Field(default=2, gt=0)
    psi_expert: Optional[float] = Field(default=None, ge=0, description="Bytes per expert")
    psi_other: float = Field(default=0.0, ge=0)
    psi_all: float = Field(default=0.0, ge=0)


class AnalysisBlock(BaseModel):
    """Paradigm dims; defaults derive from topology and model"""
    p_fsep: Optional[int] = Field(default=None, gt=0)
    p_ep: Optional[int] = Field(default=None, gt=0)
    p_fsdp: Optional[int] = Field(default=None, gt=0)
    net_bandwidth: Optional[float] = Field(default=None, gt=0)


class PlannerBlock(BaseModel):
    epsilon: int = Field(default=2, ge=2)
    seed: Optional[int] = Field(default=None, ge=0, le=MAX_SEED)
    history_mode: HistoryMode = HistoryMode.LATEST
    ema_decay: float = Field(default=0.5, gt=0, le=1)
    schemes: List[CandidateScheme] = Field(default_factory=lambda: list(CandidateScheme))

    @field_validator("schemes")
    @classmethod
    def validate_schemes(cls, v):
        return canonical_schemes(v)


class PathsBlock(BaseModel):
    trace: Optional[str] = None
    report: Optional[str] = None


class RunConfig(BaseModel):
    topology: Topology
    cost: CostBlock = Field(default_factory=CostBlock)
    model: ModelBlock
    analysis: AnalysisBlock = Field(default_factory=AnalysisBlock)
    planner: PlannerBlock = Field(default_factory=PlannerBlock)
    oracle: OracleBudget = Field(default_factory=OracleBudget)
    paths: PathsBlock = Field(default_factory=PathsBlock)

    @model_validator(mode="after")
    def validate_volumes(self):
        if self.cost.v_comm is None and self.model.hidden is None:
            raise ValueError("either cost.v_comm or model.hidden must be given")
        if self.cost.v_comp is None and (self.model.hidden is None or self.model.intermediate is None):
            raise ValueError("either cost.v_comp or both model.hidden and model.intermediate must be given")
        return self

    def with_overrides(self, **updates: Any) -> "RunConfig":
        """
        Apply dotted-key overrides (planner__seed=7 style) and re-validate
        None values are skipped so unset CLI flags leave the config alone
        """
        data = self.model_dump(mode="json")
        for dotted, value in updates.items():
            if value is None:
                continue
            block, _, field = dotted.partition("__")
            data.setdefault(block, {})[field] = value.value if hasattr(value, "value") else value
        return RunConfig.model_validate(data)
