"""Middleware package initialization"""

from app.middleware.preflight import build_preflight_chain, run_preflight

__all__ = ["build_preflight_chain", "run_preflight"]
