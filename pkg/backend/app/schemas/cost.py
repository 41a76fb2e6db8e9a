"""
Pattern: Builder (Creational)
Cost-model inputs and outputs: per-token volumes, paradigm analysis dims, time breakdowns
"""
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, computed_field

from app.schemas.arrays import ArrayModel


class CommAggregation(str, Enum):
    SERIAL = "serial"
    BOTTLENECK = "bottleneck"


class CostParams(BaseModel):
    """Per-token volumes and device rate for the time objective"""
    model_config = {"frozen": True}

    v_comm: float = Field(..., gt=0, description="Bytes per token per All-to-All hop")
    v_comp: float = Field(..., gt=0, description="Forward FLOPs per token")
    b_comp: float = Field(..., gt=0, description="FLOPs/second per device")
    f_ckpt: Literal[0, 1] = 0
    comm_aggregation: CommAggregation = CommAggregation.SERIAL

    @property
    def comp_multiplier(self) -> int:
        """Forward + 2x backward, plus one recomputed forward under checkpointing"""
        return 3 + self.f_ckpt


class AnalysisConfig(BaseModel):
    """Parallel dims and parameter sizes for the FSEP/FSDP comparison"""
    model_config = {"frozen": True}

    p_fsep: int = Field(..., gt=0)
    p_ep: int = Field(..., gt=0)
    p_fsdp: int = Field(..., gt=0)
    psi_expert: float = Field(default=0.0, ge=0, description="Bytes per expert")
    psi_other: float = Field(default=0.0, ge=0, description="Non-expert bytes per layer")
    psi_all: float = Field(default=0.0, ge=0, description="Whole-model bytes")
    capacity: int = Field(..., ge=0)
    hidden: int = Field(default=4096, gt=0)
    intermediate: int = Field(default=14336, gt=0)
    topk: int = Field(default=2, gt=0)
    tokens_per_device: int = Field(default=16384, gt=0)
    bytes_per_element: int = Field(default=2, gt=0)
    n_experts: Optional[int] = Field(default=None, gt=0)


class CostBreakdown(ArrayModel):
    """Objective value split into communication and computation"""
    t_comm: float = Field(..., ge=0)
    t_comp: float = Field(..., ge=0)
    per_device_fw_comp: np.ndarray
    per_device_recv_tokens: np.ndarray

    @computed_field
    @property
    def t_total(self) -> float:
        return self.t_comm + self.t_comp

    @property
    def max_recv_tokens(self) -> int:
        return int(self.per_device_recv_tokens.max()) if self.per_device_recv_tokens.size else 0


class CommVolumeReport(BaseModel):
    v_fsep: float
    v_fsdp: float
    ratio: float


class MemoryFootprint(BaseModel):
    optimizer_fraction: float
    parameter_bytes: float
    gradient_bytes: float


class AnalysisReport(BaseModel):
    """Everything the analyze command emits"""
    comm_volume: Optional[CommVolumeReport] = None
    comm_volume_error: Optional[str] = None
    memory: MemoryFootprint
    overlap_min_tokens: int
    overlap_satisfied: bool
    net_bandwidth: float
    b_comp: float
