"""
Planner error hierarchy
Each error carries a human-readable detail and the process exit status the CLI reports
"""
from typing import Optional


class PlannerError(Exception):
    """Base error: detail message plus CLI exit code"""
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class ConfigError(PlannerError):
    """Config or spec file could not be parsed or validated"""
    exit_code = 3


class TraceFormatError(PlannerError):
    """Malformed trace line; `line` is 1-based"""
    exit_code = 4

    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class PreconditionError(PlannerError):
    """Operation called with inputs outside its contract"""
    exit_code = 5


class InfeasibleShapeError(PreconditionError):
    """No valid layout exists for the requested (N, E, C)"""
    exit_code = 6


class OracleBoundsError(PreconditionError):
    """Instance too large for exhaustive enumeration"""
    exit_code = 7
