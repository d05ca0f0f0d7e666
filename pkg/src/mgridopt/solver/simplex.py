"""Dense bounded-variable primal simplex with exact basis duals.

Solves   min c'x   s.t.  G x <= g,  lo <= x <= hi
with a two-phase revised simplex over the slack-augmented system
[G | I] [x; s] = g, 0 <= s.  Solutions are basic feasible points
(vertices), which downstream integrality-counting arguments rely on;
interior-point methods would not do.

Pivoting is deterministic: most-negative reduced cost with
lowest-index tie-breaking, switching to Bland's rule after
10 * (row count) degenerate steps so termination is guaranteed.
Identical inputs therefore produce bitwise-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

# nonbasic statuses; basic columns are tracked via the basis array
_AT_LO = 0
_AT_HI = 1
_FREE = 2
_BASIC = 3
_FIXED = 4


class SolverError(Exception):
    """Raised when the pivot loop cannot make progress (numerical failure)."""


@dataclass(frozen=True)
class Tolerances:
    """Numeric tolerances shared by the LP and MILP solvers."""

    feasibility: float = 1e-7
    reduced_cost: float = 1e-9
    integrality: float = 1e-6
    objective: float = 1e-8
    pivot: float = 1e-10
    refactor_every: int = 60


@dataclass
class LinearProgram:
    """min c'x s.t. G x <= g, lo <= x <= hi.

    `dual_rows` marks the rows whose multipliers the caller needs;
    None requests all of them.  Bounds may be +-inf, but a bounded
    feasible set is expected (problems here come from compact
    polyhedra, so unboundedness is reported only defensively).
    """

    c: np.ndarray
    G: np.ndarray
    g: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integrality: np.ndarray | None = None
    dual_rows: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.g = np.asarray(self.g, dtype=float).ravel()
        if self.c.size:
            self.G = np.asarray(self.G, dtype=float).reshape(-1, self.c.size)
        else:
            self.G = np.zeros((self.g.size, 0))
        self.lo = np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.asarray(self.hi, dtype=float).ravel()
        n = self.c.size
        if self.lo.size != n or self.hi.size != n:
            raise ValueError("bound vectors do not match variable count")
        if self.G.shape[0] != self.g.size:
            raise ValueError("row count of G does not match g")
        if np.any(self.lo > self.hi + 1e-12):
            raise ValueError("lower bound exceeds upper bound")
        if self.integrality is not None:
            self.integrality = np.asarray(self.integrality, dtype=bool).ravel()
            if self.integrality.size != n:
                raise ValueError("integrality mask does not match variable count")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.g.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    value: float = np.nan
    duals: np.ndarray | None = None          # >= 0, one per row of G
    reduced_costs: np.ndarray | None = None  # structural columns only
    basis: np.ndarray | None = None          # basic column indices in [G | I]
    pivots: int = 0

    def duals_for(self, rows) -> np.ndarray:
        return self.duals[np.asarray(rows, dtype=int)]


def solve_lp(lp: LinearProgram, tol: Tolerances = Tolerances()) -> LpSolution:
    """Solve the LP to a vertex, returning row duals for marked rows.

    The returned multipliers satisfy mu >= 0 and complementary
    slackness; -mu is a subgradient of the optimal value with respect
    to g (used by the allocation update).
    """
    s = _Simplex(lp, tol)
    return s.run()


class _Simplex:
    """One-shot engine; build, call run() once."""

    def __init__(self, lp: LinearProgram, tol: Tolerances):
        self.lp = lp
        self.tol = tol
        n, m = lp.n, lp.m
        self.n = n
        self.m = m
        # columns: [structural | slack | artificial...]
        self.A = np.hstack([lp.G, np.eye(m)]) if n else np.eye(m)
        self.lo = np.concatenate([lp.lo, np.zeros(m)])
        self.hi = np.concatenate([lp.hi, np.full(m, np.inf)])
        self.c_phase2 = np.concatenate([lp.c, np.zeros(m)])
        self.status = np.empty(n + m, dtype=np.int8)
        self.xn = np.zeros(n + m)  # values of nonbasic columns
        for j in range(n):
            if lp.lo[j] == lp.hi[j]:
                self.status[j] = _FIXED
                self.xn[j] = lp.lo[j]
            elif np.isfinite(lp.lo[j]):
                self.status[j] = _AT_LO
                self.xn[j] = lp.lo[j]
            elif np.isfinite(lp.hi[j]):
                self.status[j] = _AT_HI
                self.xn[j] = lp.hi[j]
            else:
                self.status[j] = _FREE
                self.xn[j] = 0.0
        self.status[n:] = _AT_LO  # slacks rest at zero until made basic
        self.xn[n:] = 0.0
        self.pivots = 0
        self.degenerate_run = 0
        self.bland = False
        self.since_refactor = 0

    # -- basis bookkeeping -------------------------------------------------

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as e:
            raise SolverError(f"singular basis at pivot {self.pivots}") from e
        self.xb = self.Binv @ (self.rhs - self._nonbasic_offset())
        self.since_refactor = 0

    def _nonbasic_offset(self) -> np.ndarray:
        nb = np.flatnonzero(self.status != _BASIC)
        nbv = self.xn[nb]
        nz = nbv != 0.0
        if not np.any(nz):
            return np.zeros(self.m)
        return self.A[:, nb[nz]] @ nbv[nz]

    # -- main loop ---------------------------------------------------------

    def run(self) -> LpSolution:
        m, n = self.m, self.n
        self.rhs = self.lp.g.copy()
        resid = self.rhs - self._nonbasic_offset()
        # slacks host the initial basis; rows with negative residual get
        # an artificial column (coefficient -1) so the start is feasible
        self.basis = np.arange(n, n + m)
        bad = np.flatnonzero(resid < 0.0)
        self.n_art = bad.size
        if self.n_art:
            art_cols = np.zeros((m, self.n_art))
            for t, i in enumerate(bad):
                art_cols[i, t] = -1.0
            self.A = np.hstack([self.A, art_cols])
            self.lo = np.concatenate([self.lo, np.zeros(self.n_art)])
            self.hi = np.concatenate([self.hi, np.full(self.n_art, np.inf)])
            self.c_phase2 = np.concatenate([self.c_phase2, np.zeros(self.n_art)])
            self.status = np.concatenate(
                [self.status, np.full(self.n_art, _AT_LO, dtype=np.int8)])
            self.xn = np.concatenate([self.xn, np.zeros(self.n_art)])
            self.basis[bad] = n + m + np.arange(self.n_art)
        self.status[self.basis] = _BASIC
        self._refactor()

        if self.n_art:
            c1 = np.zeros(self.A.shape[1])
            c1[n + m:] = 1.0
            self._iterate(c1, phase_one=True)
            art_basic = self.basis >= n + m
            infeas = float(self.xb[art_basic].sum()) if np.any(art_basic) else 0.0
            if infeas > self.tol.feasibility:
                return LpSolution(status=INFEASIBLE, pivots=self.pivots)
            self._expel_artificials(c1)
            # artificials may never re-enter
            self.lo[n + m:] = 0.0
            self.hi[n + m:] = 0.0
            nb_art = (self.status != _BASIC)
            nb_art[:n + m] = False
            self.status[nb_art] = _FIXED
            self.degenerate_run = 0
            self.bland = False

        unbounded = self._iterate(self.c_phase2, phase_one=False)
        if unbounded:
            return LpSolution(status=UNBOUNDED, pivots=self.pivots)
        return self._extract()

    def _iterate(self, c: np.ndarray, phase_one: bool) -> bool:
        """Pivot until optimal for cost c. Returns True if unbounded."""
        limit = 200 * (self.m + self.n) + 2000
        rc_tol = self.tol.reduced_cost
        for _ in range(limit):
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[self.basis] = 0.0
            j = self._entering(d, rc_tol)
            if j < 0:
                return False
            sigma = 1.0 if (self.status[j] == _AT_LO
                            or (self.status[j] == _FREE and d[j] < 0)) else -1.0
            w = self.Binv @ self.A[:, j]
            t, leave_pos, leave_to_hi = self._ratio(j, sigma, w)
            if t is None:
                if phase_one:
                    raise SolverError("phase-1 subproblem unbounded")
                return True
            if t <= self.tol.pivot:
                self.degenerate_run += 1
                if not self.bland and self.degenerate_run > 10 * max(self.m, 1):
                    self.bland = True
            else:
                self.degenerate_run = 0
            self._pivot(j, sigma, w, t, leave_pos, leave_to_hi)
        raise SolverError(f"pivot limit exceeded ({limit} iterations)")

    def _entering(self, d: np.ndarray, rc_tol: float) -> int:
        st = self.status
        viol = np.zeros_like(d)
        at_lo = st == _AT_LO
        at_hi = st == _AT_HI
        free = st == _FREE
        viol[at_lo] = np.maximum(-d[at_lo], 0.0)
        viol[at_hi] = np.maximum(d[at_hi], 0.0)
        viol[free] = np.abs(d[free])
        eligible = viol > rc_tol
        if not np.any(eligible):
            return -1
        if self.bland:
            return int(np.flatnonzero(eligible)[0])
        best = np.max(viol)
        return int(np.flatnonzero(viol >= best - 1e-15 * max(1.0, best))[0])

    def _ratio(self, j: int, sigma: float, w: np.ndarray):
        """Min-ratio step for entering column j moving by +sigma.

        Returns (t, leaving basis position or -1 for a bound flip,
        leaving-variable-goes-to-upper flag); t None means unbounded.
        """
        piv = self.tol.pivot
        den = sigma * w
        xb, basis = self.xb, self.basis
        lo_b = self.lo[basis]
        hi_b = self.hi[basis]
        steps = np.full(self.m, np.inf)
        dec = den > piv
        inc = den < -piv
        with np.errstate(invalid="ignore"):
            if np.any(dec):
                steps[dec] = (xb[dec] - lo_b[dec]) / den[dec]
            if np.any(inc):
                steps[inc] = (hi_b[inc] - xb[inc]) / (-den[inc])
        np.maximum(steps, 0.0, out=steps)  # degenerate roundoff clamp
        t_row = float(steps.min()) if self.m else np.inf
        flip = self.hi[j] - self.lo[j]
        if np.isfinite(flip) and flip < t_row:
            return flip, -1, False
        if not np.isfinite(t_row):
            return None, -1, False
        # ties at the minimum ratio: largest pivot element for stability,
        # lowest basis position to break residual ties; under Bland the
        # lowest variable index, which guarantees finite termination
        near = np.flatnonzero(steps <= t_row * (1.0 + 1e-14) + 1e-15)
        if self.bland:
            pos = int(near[np.argmin(basis[near])])
        else:
            pos = int(near[np.argmax(np.abs(w[near]))])
        return float(steps[pos]), pos, bool(den[pos] < 0)

    def _pivot(self, j, sigma, w, t, pos, to_hi):
        self.xb = self.xb - (sigma * t) * w
        if pos < 0:
            # bound flip, basis unchanged
            self.status[j] = _AT_HI if self.status[j] == _AT_LO else _AT_LO
            self.xn[j] = self.hi[j] if self.status[j] == _AT_HI else self.lo[j]
        else:
            out = self.basis[pos]
            enter_val = self.xn[j] + sigma * t
            self.basis[pos] = j
            self.status[j] = _BASIC
            if self.lo[out] == self.hi[out]:
                self.status[out] = _FIXED
                self.xn[out] = self.lo[out]
            elif to_hi:
                self.status[out] = _AT_HI
                self.xn[out] = self.hi[out]
            else:
                self.status[out] = _AT_LO
                self.xn[out] = self.lo[out]
            # rank-one update of the basis inverse
            wr = w[pos]
            if abs(wr) < self.tol.pivot:
                raise SolverError("vanishing pivot element")
            row = self.Binv[pos] / wr
            self.Binv -= np.outer(w, row)
            self.Binv[pos] = row
            self.xb[pos] = enter_val
        self.pivots += 1
        self.since_refactor += 1
        if self.since_refactor >= self.tol.refactor_every:
            self._refactor()

    def _expel_artificials(self, c1: np.ndarray):
        """Pivot zero-valued basic artificials out where a real column allows."""
        n_real = self.n + self.m
        for pos in range(self.m):
            if self.basis[pos] < n_real:
                continue
            row = self.Binv[pos] @ self.A[:, :n_real]
            cand = np.flatnonzero((np.abs(row) > 1e-8)
                                  & (self.status[:n_real] != _BASIC)
                                  & (self.status[:n_real] != _FIXED))
            if cand.size == 0:
                continue  # redundant row; artificial stays basic at zero
            j = int(cand[0])
            out = self.basis[pos]
            self.basis[pos] = j
            self.status[j] = _BASIC
            self.status[out] = _AT_LO
            self.xn[out] = 0.0
            self._refactor()

    # -- extraction ----------------------------------------------------------

    def _extract(self) -> LpSolution:
        self._refactor()  # clean drift before reporting
        n, m = self.n, self.m
        full = self.xn.copy()
        full[self.basis] = self.xb
        x = full[:n].copy()
        # clamp roundoff-level bound violations
        np.clip(x, self.lp.lo, self.lp.hi, out=x)
        y = self.c_phase2[self.basis] @ self.Binv
        duals = np.maximum(-y, 0.0)
        d_struct = (self.c_phase2 - y @ self.A)[:n] if n else np.zeros(0)
        value = float(self.lp.c @ x) if n else 0.0
        return LpSolution(
            status=OPTIMAL,
            x=x,
            value=value,
            duals=duals,
            reduced_costs=d_struct,
            basis=self.basis.copy(),
            pivots=self.pivots,
        )


def lp_value_subgradient(c, G, g, lo, hi, A, y,
                         tol: Tolerances = Tolerances()):
    """Multiplier of the resource rows of a parameterized subproblem.

    Solves min c'x s.t. G x <= g, lo <= x <= hi, A x <= y and returns
    (mu, solution) where mu are the duals of the A-rows: -mu is a
    subgradient of the optimal value with respect to the resource y,
    so p(y + d) >= p(y) - mu'd for any perturbation d keeping the
    subproblem feasible.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    stacked = LinearProgram(c, np.vstack([G, A]) if G.size else A,
                            np.concatenate([g, y]), lo, hi)
    sol = solve_lp(stacked, tol)
    if sol.status != OPTIMAL:
        return None, sol
    return sol.duals[g.size:].copy(), sol


def split_singleton_rows(G, g, lo, hi):
    """Fold rows with a single nonzero into variable bounds.

    Returns (G', g', lo', hi') where G' keeps only rows touching two or
    more variables.  Solving with native bounds is much cheaper than
    carrying box rows, and the feasible set is unchanged.
    """
    G = np.asarray(G, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    lo = np.array(lo, dtype=float).ravel().copy()
    hi = np.array(hi, dtype=float).ravel().copy()
    if G.size == 0:
        return G.reshape(g.size if G.shape[0] else 0, lo.size), g, lo, hi
    nnz = np.count_nonzero(G, axis=1)
    keep = nnz >= 2
    for i in np.flatnonzero(nnz == 1):
        j = int(np.flatnonzero(G[i])[0])
        a = G[i, j]
        if a > 0:
            hi[j] = min(hi[j], g[i] / a)
        else:
            lo[j] = max(lo[j], g[i] / a)
    # rows with no nonzeros: constant constraints, keep only if violated
    for i in np.flatnonzero(nnz == 0):
        if g[i] < 0:
            keep[i] = True  # provably infeasible row, let the solver report it
    return G[keep], g[keep], lo, hi
