"""Small MILP toolkit: model container, bounded simplex, branch-and-bound."""

from .model import (
    EQ,
    GE,
    INF,
    LE,
    LinearRow,
    MilpModel,
    ModelError,
    VarKind,
    add_local_branching,
    fix_variables,
)
from .solve import (
    FEAS_TOL,
    INT_TOL,
    MIP_GAP,
    SeparatorError,
    SolveResult,
    Status,
    solve_lp,
    solve_mip,
)

__all__ = [
    "EQ", "GE", "INF", "LE", "LinearRow", "MilpModel", "ModelError", "VarKind",
    "add_local_branching", "fix_variables", "FEAS_TOL", "INT_TOL", "MIP_GAP",
    "SeparatorError", "SolveResult", "Status", "solve_lp", "solve_mip",
]
