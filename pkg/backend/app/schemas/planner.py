"""
Pattern: Builder (Creational)
Planner models: expert layout A, sparse routing plan S, replica vectors, search spec
Validators enforce capacity, hosting and conservation so invalid objects cannot be built
"""
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from app.schemas.arrays import ArrayModel, as_count_array
from app.schemas.cost import CostBreakdown
from app.schemas.trace import MAX_SEED, RoutingMatrix


class HistoryMode(str, Enum):
    LATEST = "latest"
    EMA = "ema"


class CandidateOrigin(str, Enum):
    PROPORTIONAL = "proportional"
    EVEN = "even"
    PERTURBED = "perturbed"


class CandidateScheme(str, Enum):
    """Base members of the replica set; perturbations are drawn from whichever are enabled"""
    PROPORTIONAL = "proportional"
    EVEN = "even"


def canonical_schemes(schemes: List[CandidateScheme]) -> List[CandidateScheme]:
    """Deduplicated, in candidate order (proportional before even)"""
    chosen = set(schemes)
    if not chosen:
        raise ValueError("at least one candidate scheme is required")
    return [scheme for scheme in CandidateScheme if scheme in chosen]


class ExpertLayout(ArrayModel):
    """
    E x N replica placement: placement[j, i] = 1 when expert j is materialised on device i
    Every device holds exactly C experts, every expert lives somewhere, at most one copy per device
    """
    placement: np.ndarray

    @field_validator("placement", mode="before")
    @classmethod
    def validate_placement(cls, v):
        array = as_count_array(v, ndim=2, name="placement")
        n_experts, n_devices = array.shape
        if n_experts < 1 or n_devices < 1:
            raise ValueError(f"placement needs E >= 1 and N >= 1, got shape {array.shape}")
        if array.max() > 1:
            raise ValueError("placement must be binary: at most one replica of an expert per device")
        per_device = array.sum(axis=0)
        if not np.all(per_device == per_device[0]) or per_device[0] < 1:
            raise ValueError(f"every device must host the same positive number of experts, got {per_device.tolist()}")
        unhosted = np.flatnonzero(array.sum(axis=1) == 0)
        if unhosted.size:
            raise ValueError(f"experts {unhosted.tolist()} are hosted nowhere")
        return array

    @property
    def n_experts(self) -> int:
        return int(self.placement.shape[0])

    @property
    def n_devices(self) -> int:
        return int(self.placement.shape[1])

    @property
    def capacity(self) -> int:
        return int(self.placement[:, 0].sum())

    def replica_counts(self) -> List[int]:
        return self.placement.sum(axis=1).astype(int).tolist()

    def hosts(self, expert: int) -> np.ndarray:
        """Devices hosting the expert, ascending"""
        return np.flatnonzero(self.placement[expert])

    def to_matrix(self) -> List[List[int]]:
        return self.placement.astype(int).tolist()


class RoutingPlan(ArrayModel):
    """
    Sparse S: parallel arrays of (src, expert, dst, tokens), tokens > 0,
    sorted lexicographically by (src, expert, dst)
    """
    n_devices: int = Field(..., gt=0)
    n_experts: int = Field(..., gt=0)
    src: np.ndarray
    expert: np.ndarray
    dst: np.ndarray
    tokens: np.ndarray

    @field_validator("src", "expert", "dst", "tokens", mode="before")
    @classmethod
    def validate_column(cls, v, info):
        return as_count_array(v, ndim=1, name=info.field_name)

    @model_validator(mode="after")
    def validate_entries(self):
        size = self.tokens.size
        if not (self.src.size == self.expert.size == self.dst.size == size):
            raise ValueError("routing plan columns must have equal length")
        if size == 0:
            return self
        if self.tokens.min() <= 0:
            raise ValueError("routing plan entries must carry a positive token count")
        if max(self.src.max(), self.dst.max()) >= self.n_devices:
            raise ValueError(f"device index out of range [0, {self.n_devices})")
        if self.expert.max() >= self.n_experts:
            raise ValueError(f"expert index out of range [0, {self.n_experts})")
        keys = (self.src * self.n_experts + self.expert) * self.n_devices + self.dst
        if np.any(np.diff(keys) <= 0):
            raise ValueError("routing plan entries must be unique and sorted by (src, expert, dst)")
        return self

    @classmethod
    def from_entries(
        cls,
        n_devices: int,
        n_experts: int,
        src: np.ndarray,
        expert: np.ndarray,
        dst: np.ndarray,
        tokens: np.ndarray,
    ) -> "RoutingPlan":
        """Drop zero entries, merge duplicates and sort"""
        src, expert, dst, tokens = (np.asarray(a, dtype=np.int64) for a in (src, expert, dst, tokens))
        keep = tokens > 0
        keys = (src[keep] * n_experts + expert[keep]) * n_devices + dst[keep]
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        merged = np.bincount(inverse, weights=tokens[keep], minlength=unique_keys.size).astype(np.int64)
        dst_out = unique_keys % n_devices
        rest = unique_keys // n_devices
        return cls(
            n_devices=n_devices,
            n_experts=n_experts,
            src=rest // n_experts,
            expert=rest % n_experts,
            dst=dst_out,
            tokens=merged,
        )

    @classmethod
    def empty(cls, n_devices: int, n_experts: int) -> "RoutingPlan":
        none = np.zeros(0, dtype=np.int64)
        return cls(n_devices=n_devices, n_experts=n_experts, src=none, expert=none, dst=none, tokens=none)

    def total_tokens(self) -> int:
        return int(self.tokens.sum())

    def routed_counts(self) -> np.ndarray:
        """N x E: sum over destinations, the left side of token conservation"""
        flat = np.bincount(
            self.src * self.n_experts + self.expert,
            weights=self.tokens,
            minlength=self.n_devices * self.n_experts,
        )
        return flat.astype(np.int64).reshape(self.n_devices, self.n_experts)

    def received_tokens(self) -> np.ndarray:
        """Tokens landing on each destination device"""
        return np.bincount(self.dst, weights=self.tokens, minlength=self.n_devices).astype(np.int64)

    def entries(self) -> List[Dict[str, int]]:
        return [
            {"src": int(s), "expert": int(e), "dst": int(d), "tokens": int(t)}
            for s, e, d, t in zip(self.src, self.expert, self.dst, self.tokens)
        ]


class ReplicaVector(BaseModel):
    """Replica count per expert; each in [1, N], summing to N x C"""
    model_config = {"frozen": True}

    counts: List[int]
    n_devices: int = Field(..., gt=0)
    capacity: int = Field(..., gt=0)

    @model_validator(mode="after")
    def validate_counts(self):
        if not self.counts:
            raise ValueError("replica vector needs at least one expert")
        if any(c < 1 or c > self.n_devices for c in self.counts):
            raise ValueError(f"replica counts must lie in [1, {self.n_devices}], got {self.counts}")
        if sum(self.counts) != self.n_devices * self.capacity:
            raise ValueError(
                f"replica counts must sum to N x C = {self.n_devices * self.capacity}, got {sum(self.counts)}"
            )
        return self

    @property
    def n_experts(self) -> int:
        return len(self.counts)


class LayoutSearchSpec(BaseModel):
    """Candidate-set size, seed and routing history (most recent last)"""
    epsilon: int = Field(default=2, ge=2)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    history: List[RoutingMatrix] = Field(..., min_length=1)
    history_mode: HistoryMode = HistoryMode.LATEST
    ema_decay: float = Field(default=0.5, gt=0, le=1)
    schemes: List[CandidateScheme] = Field(default_factory=lambda: list(CandidateScheme))

    @field_validator("schemes")
    @classmethod
    def validate_schemes(cls, v):
        return canonical_schemes(v)


class LayoutCandidate(BaseModel):
    """One scored member of the replica set"""
    origin: CandidateOrigin
    replicas: List[int]
    t_total: float


class LayoutSearchResult(BaseModel):
    """Chosen layout with its lite-routing plan and every scored candidate"""
    model_config = {"arbitrary_types_allowed": True}

    layout: ExpertLayout
    plan: RoutingPlan
    cost: CostBreakdown
    candidates: List[LayoutCandidate]
    chosen: int
    routing: Optional[RoutingMatrix] = None


class SearchSettings(BaseModel):
    """Layout-search knobs shared by every planning step of a run"""
    model_config = {"frozen": True}

    epsilon: int = Field(default=2, ge=2)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    history_mode: HistoryMode = HistoryMode.LATEST
    ema_decay: float = Field(default=0.5, gt=0, le=1)
    schemes: List[CandidateScheme] = Field(default_factory=lambda: list(CandidateScheme))

    @field_validator("schemes")
    @classmethod
    def validate_schemes(cls, v):
        return canonical_schemes(v)

    def step_seed(self, layer: int, iteration: int) -> int:
        """Independent 64-bit seed per (layer, iteration) planning step"""
        sequence = np.random.SeedSequence([self.seed, layer, iteration])
        return int(sequence.generate_state(1, dtype=np.uint64)[0])

    def spec_for(self, history: List[RoutingMatrix], layer: int, iteration: int) -> LayoutSearchSpec:
        return LayoutSearchSpec(
            epsilon=self.epsilon,
            seed=self.step_seed(layer, iteration),
            history=history,
            history_mode=self.history_mode,
            ema_decay=self.ema_decay,
            schemes=self.schemes,
        )
