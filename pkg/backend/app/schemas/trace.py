"""
Pattern: Builder (Creational)
Routing trace models: per-(iteration, layer) token counts and the synthetic trace spec
"""
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from app.schemas.arrays import ArrayModel, as_count_array

MAX_SEED = 2**64 - 1


class RoutingMatrix(ArrayModel):
    """
    N x E token counts: counts[i, j] tokens on device i routed to expert j
    """
    counts: np.ndarray

    @field_validator("counts", mode="before")
    @classmethod
    def validate_counts(cls, v):
        array = as_count_array(v, ndim=2, name="routing counts")
        if array.shape[0] < 1 or array.shape[1] < 1:
            raise ValueError(f"routing counts need N >= 1 and E >= 1, got shape {array.shape}")
        return array

    @property
    def n_devices(self) -> int:
        return int(self.counts.shape[0])

    @property
    def n_experts(self) -> int:
        return int(self.counts.shape[1])

    def expert_loads(self) -> np.ndarray:
        """Column sums: tokens routed to each expert across all devices"""
        return self.counts.sum(axis=0)

    def total_tokens(self) -> int:
        return int(self.counts.sum())


class TraceRecord(BaseModel):
    """Routing observed for one (iteration, layer)"""
    model_config = {"frozen": True}

    iteration: int = Field(..., ge=0)
    layer: int = Field(..., ge=0)
    routing: RoutingMatrix


class TraceGenSpec(BaseModel):
    """
    Synthetic trace parameters
    skew_alpha is the symmetric Dirichlet concentration of the initial expert popularity;
    drift_sigma is the per-iteration Gaussian step on popularity logits
    """
    n_devices: int = Field(..., gt=0)
    n_experts: int = Field(..., gt=0)
    n_layers: int = Field(default=1, gt=0)
    n_iterations: int = Field(..., gt=0)
    tokens_per_device: int = Field(..., gt=0)
    skew_alpha: float = Field(..., gt=0)
    drift_sigma: float = Field(default=0.0, ge=0)
    seed: int = Field(..., ge=0, le=MAX_SEED)
    device_concentration: Optional[float] = Field(
        default=None, gt=0, description="Per-device Dirichlet concentration around the layer popularity"
    )


class TraceStats(BaseModel):
    """Load summary for one trace record"""
    iteration: int
    layer: int
    total_tokens: int
    expert_loads: List[int]
    shares: List[float]
    max_share: float
    min_share: float
    zero_total: bool = False
