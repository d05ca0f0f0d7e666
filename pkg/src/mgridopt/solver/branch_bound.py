"""Branch-and-bound on top of the bounded-variable simplex.

Best-bound node selection, branching on the most fractional
integer-flagged coordinate (ties to the lowest column index).  All
choices are deterministic, so identical inputs give identical
solutions and node counts.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram,
                      LpSolution, Tolerances, solve_lp)


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None = None
    value: float = np.nan
    node_count: int = 0


def solve_milp(lp: LinearProgram, tol: Tolerances = Tolerances()) -> MipSolution:
    """Globally minimize the mixed-integer program described by `lp`.

    `lp.integrality` flags the integer-constrained coordinates.  The
    continuous relaxation must be bounded (all problems built here live
    on compact polyhedra).
    """
    mask = lp.integrality
    if mask is None or not np.any(mask):
        sol = solve_lp(lp, tol)
        return MipSolution(status=sol.status, x=sol.x, value=sol.value,
                           node_count=1)
    int_idx = np.flatnonzero(mask)

    best_x = None
    best_val = np.inf
    nodes = 0
    counter = 0
    # heap entries: (lp bound, insertion counter, lo, hi)
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []

    root = solve_lp(lp, tol)
    nodes += 1
    if root.status == INFEASIBLE:
        return MipSolution(status=INFEASIBLE, node_count=nodes)
    if root.status == UNBOUNDED:
        return MipSolution(status=UNBOUNDED, node_count=nodes)
    state = [(root, lp.lo, lp.hi)]

    while state or heap:
        if state:
            sol, lo, hi = state.pop()
        else:
            bound, _, lo, hi = heapq.heappop(heap)
            if bound >= best_val - 1e-9:
                continue
            sol = solve_lp(LinearProgram(lp.c, lp.G, lp.g, lo, hi), tol)
            nodes += 1
            if sol.status != OPTIMAL:
                continue
        if sol.value >= best_val - 1e-9:
            continue
        frac = np.abs(sol.x[int_idx] - np.round(sol.x[int_idx]))
        worst = int(np.argmax(frac))
        if frac[worst] <= 1e-12:
            # integral to machine precision; branching any further could
            # only re-derive the same point, so accept it as incumbent
            x = sol.x.copy()
            x[int_idx] = np.round(x[int_idx])
            best_x, best_val = x, sol.value
            continue
        j = int(int_idx[worst])
        pivot = sol.x[j]
        counter += 1
        lo_up = lo.copy()
        lo_up[j] = np.ceil(pivot)
        if lo_up[j] <= hi[j] + 1e-12:
            heapq.heappush(heap, (sol.value, counter, lo_up, hi.copy()))
        counter += 1
        hi_dn = hi.copy()
        hi_dn[j] = np.floor(pivot)
        if lo[j] <= hi_dn[j] + 1e-12:
            heapq.heappush(heap, (sol.value, counter, lo.copy(), hi_dn))

    if best_x is None:
        return MipSolution(status=INFEASIBLE, node_count=nodes)
    return MipSolution(status=OPTIMAL, x=best_x, value=best_val,
                       node_count=nodes)
