from app.api.analysis import analyze_command
from app.api.oracle import oracle_command
from app.api.planning import plan_command
from app.api.simulation import simulate_command, sweep_command
from app.api.traces import generate_trace_command, trace_stats_command

__all__ = [
    "analyze_command",
    "generate_trace_command",
    "oracle_command",
    "plan_command",
    "simulate_command",
    "sweep_command",
    "trace_stats_command",
]
