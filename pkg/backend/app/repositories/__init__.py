from app.repositories.report_repository import ReportRepository, get_report_repository
from app.repositories.trace_repository import TraceRepository, get_trace_repository

__all__ = ["ReportRepository", "TraceRepository", "get_report_repository", "get_trace_repository"]
