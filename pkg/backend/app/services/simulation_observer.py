"""
Pattern: Observer (Behavioral)
Simulation progress tracking: every costed (layer, iteration, scheduler) step is published to observers
"""
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Tuple
import logging

from pydantic import BaseModel

from app.schemas.planner import ExpertLayout, RoutingPlan
from app.schemas.simulation import SchedulerKind, SimRecord, SimReport

logger = logging.getLogger(__name__)


class SimulationStep(BaseModel):
    """One costed step with the layout and plan that produced it"""
    model_config = {"arbitrary_types_allowed": True, "frozen": True}

    record: SimRecord
    layout: ExpertLayout
    plan: RoutingPlan


class SimulationObserver(ABC):
    """
    Pattern: Observer (Behavioral)
    Abstract observer interface for simulation steps
    """

    @abstractmethod
    def notify(self, step: SimulationStep):
        """Receive one costed step"""
        pass

    def complete(self, report: SimReport):
        """Run finished"""
        pass


class LoggingObserver(SimulationObserver):
    """
    Pattern: Observer (Behavioral) - Concrete Observer
    Logs per-step costs and per-scheduler summaries
    """

    def notify(self, step: SimulationStep):
        record = step.record
        logger.debug(
            f"iter {record.iteration} layer {record.layer} {record.scheduler.value}: "
            f"t_total={record.t_total:.6g} max_recv={record.max_recv_tokens} ideal={record.ideal_tokens:.6g}"
        )

    def complete(self, report: SimReport):
        for scheduler in report.schedulers:
            name = scheduler.value
            logger.info(
                f"Scheduler {name}: mean iteration time {report.mean_iteration_time[name]:.6g}s, "
                f"mean balance ratio {report.mean_balance_ratio[name]:.4f}"
            )


class LayoutHistoryObserver(SimulationObserver):
    """
    Pattern: Observer (Behavioral) - Concrete Observer
    Keeps the layout and routing plan applied at every step
    """

    def __init__(self):
        self.steps: Dict[Tuple[SchedulerKind, int, int], SimulationStep] = {}

    def notify(self, step: SimulationStep):
        record = step.record
        self.steps[(record.scheduler, record.layer, record.iteration)] = step

    def layout_at(self, scheduler: SchedulerKind, layer: int, iteration: int) -> Optional[ExpertLayout]:
        step = self.steps.get((scheduler, layer, iteration))
        return step.layout if step else None

    def plan_at(self, scheduler: SchedulerKind, layer: int, iteration: int) -> Optional[RoutingPlan]:
        step = self.steps.get((scheduler, layer, iteration))
        return step.plan if step else None


class SimulationTracker:
    """
    Pattern: Observer (Behavioral) - Subject
    Fans simulation steps out to attached observers
    """

    def __init__(self):
        self.observers: List[SimulationObserver] = []

    def attach(self, observer: SimulationObserver):
        """Attach observer to subject"""
        if observer not in self.observers:
            self.observers.append(observer)
            logger.debug(f"Observer {observer.__class__.__name__} attached to SimulationTracker")

    def detach(self, observer: SimulationObserver):
        """Detach observer from subject"""
        if observer in self.observers:
            self.observers.remove(observer)
            logger.debug(f"Observer {observer.__class__.__name__} detached from SimulationTracker")

    def notify_observers(self, step: SimulationStep):
        for observer in self.observers:
            observer.notify(step)

    def complete(self, report: SimReport):
        for observer in self.observers:
            observer.complete(report)
