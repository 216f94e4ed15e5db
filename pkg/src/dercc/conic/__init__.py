from .program import (
    ConicProgram,
    ResidualReport,
    Solution,
    SolveStatus,
    ToleranceConfig,
    dump_program,
    verify,
)
from .solver import solve

__all__ = [
    "ConicProgram",
    "ResidualReport",
    "Solution",
    "SolveStatus",
    "ToleranceConfig",
    "dump_program",
    "solve",
    "verify",
]
