"""
Pattern: Chain of Responsibility (Behavioral)
Preflight handlers composed in a chain; every precondition is checked before any computation starts
"""
from abc import ABC
from typing import List, Optional, Sequence
import logging

from pydantic import BaseModel, Field

from app.errors import ConfigError, OracleBoundsError, PreconditionError
from app.schemas.cost import CommAggregation
from app.schemas.run_config import RunConfig
from app.schemas.simulation import SchedulerKind
from app.schemas.trace import TraceRecord
from app.services.oracle_service import LAYOUT_MAX_CAPACITY, LAYOUT_MAX_DEVICES, LAYOUT_MAX_EXPERTS
from app.services.planner_service import check_shape

logger = logging.getLogger(__name__)


class PreflightContext(BaseModel):
    """Everything a command is about to run with"""
    model_config = {"arbitrary_types_allowed": True}

    config: RunConfig
    trace: Optional[List[TraceRecord]] = None
    schedulers: List[SchedulerKind] = Field(default_factory=list)
    needs_seed: bool = False
    exact_search: bool = False
    analysis: bool = False


class PreflightHandler(ABC):
    """
    Pattern: Chain of Responsibility (Behavioral) - Handler
    Checks one concern, then hands the context down the chain
    """

    def __init__(self):
        self._next: Optional["PreflightHandler"] = None

    def set_next(self, handler: "PreflightHandler") -> "PreflightHandler":
        self._next = handler
        return handler

    def handle(self, context: PreflightContext) -> None:
        self.check(context)
        if self._next is not None:
            self._next.handle(context)

    def check(self, context: PreflightContext) -> None:
        pass


class SeedHandler(PreflightHandler):
    """Randomised paths must be reproducible"""

    def check(self, context):
        if context.needs_seed and context.config.planner.seed is None:
            raise ConfigError("--seed is required for this command (or set planner.seed in the config)")


class CapacityHandler(PreflightHandler):
    """C <= E <= N x C for the configured cluster"""

    def check(self, context):
        config = context.config
        check_shape(config.topology.n_devices, config.model.n_experts, config.model.capacity)


class TraceShapeHandler(PreflightHandler):
    """Trace dimensions agree with topology and model"""

    def check(self, context):
        if context.trace is None:
            return
        if not context.trace:
            raise PreconditionError("trace has no records")
        config = context.config
        expected = (config.topology.n_devices, config.model.n_experts)
        shape = context.trace[0].routing.counts.shape
        if shape != expected:
            raise PreconditionError(
                f"trace is {shape[0]} devices x {shape[1]} experts but the config describes "
                f"{expected[0]} x {expected[1]}"
            )


class OracleBoundsHandler(PreflightHandler):
    """Exact search only within its enumeration bounds"""

    def check(self, context):
        if not (context.exact_search or SchedulerKind.ORACLE_LAYOUT in context.schedulers):
            return
        config = context.config
        n_devices, n_experts, capacity = config.topology.n_devices, config.model.n_experts, config.model.capacity
        if n_devices > LAYOUT_MAX_DEVICES or n_experts > LAYOUT_MAX_EXPERTS or capacity > LAYOUT_MAX_CAPACITY:
            raise OracleBoundsError(
                f"exact search needs N <= {LAYOUT_MAX_DEVICES}, E <= {LAYOUT_MAX_EXPERTS}, "
                f"C <= {LAYOUT_MAX_CAPACITY}, got N={n_devices} E={n_experts} C={capacity}"
            )
        if config.cost.comm_aggregation != CommAggregation.SERIAL:
            raise PreconditionError("exact search supports cost.comm_aggregation = serial only")


class AnalysisEquivalenceHandler(PreflightHandler):
    """
    Paradigm dims given in the config must describe comparable FSEP and FSDP setups
    Derived defaults are left to the analysis report, which flags a mismatch instead
    """

    def check(self, context):
        if not context.analysis:
            return
        config = context.config
        dims = config.analysis
        if None not in (dims.p_fsep, dims.p_ep, dims.p_fsdp) and dims.p_ep * dims.p_fsdp != dims.p_fsep:
            raise PreconditionError(
                f"analysis dims need p_ep x p_fsdp = p_fsep, got {dims.p_ep} x {dims.p_fsdp} != {dims.p_fsep}"
            )
        if dims.p_ep is not None and config.model.capacity * dims.p_ep != config.model.n_experts:
            raise PreconditionError(
                f"analysis dims need C x p_ep = E, got {config.model.capacity} x {dims.p_ep} "
                f"!= {config.model.n_experts}"
            )


def build_preflight_chain() -> PreflightHandler:
    """
    Pattern: Chain of Responsibility (Behavioral)
    seed -> capacity -> trace shape -> oracle bounds -> analysis equivalence
    """
    head = SeedHandler()
    (
        head.set_next(CapacityHandler())
        .set_next(TraceShapeHandler())
        .set_next(OracleBoundsHandler())
        .set_next(AnalysisEquivalenceHandler())
    )
    return head


def run_preflight(
    config: RunConfig,
    trace: Optional[Sequence[TraceRecord]] = None,
    schedulers: Sequence[SchedulerKind] = (),
    needs_seed: bool = False,
    exact_search: bool = False,
    analysis: bool = False,
) -> None:
    context = PreflightContext(
        config=config,
        trace=list(trace) if trace is not None else None,
        schedulers=list(schedulers),
        needs_seed=needs_seed,
        exact_search=exact_search,
        analysis=analysis,
    )
    build_preflight_chain().handle(context)
    logger.debug("Preflight checks passed")
