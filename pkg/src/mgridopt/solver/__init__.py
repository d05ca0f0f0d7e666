from .branch_bound import MipSolution, solve_milp
from .lpformat import write_lp_format
from .simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram,
                      LpSolution, SolverError, Tolerances,
                      lp_value_subgradient, solve_lp, split_singleton_rows)

__all__ = [
    "INFEASIBLE", "OPTIMAL", "UNBOUNDED",
    "LinearProgram", "LpSolution", "MipSolution", "SolverError", "Tolerances",
    "lp_value_subgradient", "solve_lp", "solve_milp", "split_singleton_rows",
    "write_lp_format",
]
