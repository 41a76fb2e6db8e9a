"""Services package initialization"""

from app.services.scheduler_service import LayoutScheduler, get_scheduler

__all__ = ["LayoutScheduler", "get_scheduler"]
