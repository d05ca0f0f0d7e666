"""Per-unit mixed-integer building blocks and the coupled balance form.

Each microgrid unit (storage, generator, controllable load, grid
connection) is translated into a LocalBlock: a compact polyhedron
G x <= g with an integrality mask, a linear cost c, and a K-row
coupling matrix A whose k-th row evaluates the unit's signed power
injection at step k.  Logical switches (charge/discharge, on/off,
import/export) are encoded with big-M inequalities driven by a strict
positivity constant epsilon.

Sign conventions: storage power u >= 0 while charging (it consumes),
generator and grid power enter the balance negated (they supply),
curtailment removes -beta*D of demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .solver import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp

DEFAULT_EPSILON = 1e-6  # machine epsilon would make the big-M rows tie-prone


class ParameterError(ValueError):
    """A unit parameter violates its documented bound."""


class DimensionError(ValueError):
    """Profiles or blocks with inconsistent horizon lengths."""


def _require(cond: bool, message: str):
    if not cond:
        raise ParameterError(message)


# --------------------------------------------------------------------------
# parameter records
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StorageParams:
    """Battery-style storage unit.

    Energies in kWh, powers in kW, costs in EUR/kW; `x_pl` is the
    physiological loss per step and `epsilon` the strict-positivity
    constant of the charge/discharge switch.
    """

    eta_c: float
    eta_d: float
    x_min: float
    x_max: float
    x_pl: float
    C: float
    zeta: float
    x0: float
    epsilon: float = DEFAULT_EPSILON

    def validate(self):
        # 1.0 is admitted so ideal lossless storage stays expressible
        _require(0.0 < self.eta_c <= 1.0,
                 f"eta_c must lie in (0,1], got {self.eta_c}")
        _require(0.0 < self.eta_d <= 1.0,
                 f"eta_d must lie in (0,1], got {self.eta_d}")
        _require(0.0 < self.x_min < self.x_max,
                 f"need 0 < x_min < x_max, got ({self.x_min}, {self.x_max})")
        _require(self.x_pl >= 0.0, f"x_pl must be >= 0, got {self.x_pl}")
        _require(self.C > 0.0, f"C must be > 0, got {self.C}")
        _require(self.zeta >= 0.0, f"zeta must be >= 0, got {self.zeta}")
        _require(self.x_min <= self.x0 <= self.x_max,
                 f"x0 must lie in [x_min, x_max], got {self.x0}")
        _require(self.epsilon > 0.0, f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class GeneratorParams:
    """Dispatchable generator with commitment logic.

    `cost_segments` holds (slope, intercept) pairs of the piecewise
    linear generation cost; `kappa_u`/`kappa_d` are per-step
    startup/shutdown cost profiles; `delta_init`/`u_init` describe the
    state one step before the horizon begins.
    """

    T_up: int
    T_down: int
    u_min: float
    u_max: float
    r_max: float
    kappa_u: tuple
    kappa_d: tuple
    zeta: float
    cost_segments: tuple  # ((S, s), ...)
    delta_init: int = 0
    u_init: float = 0.0

    def validate(self, K: int | None = None):
        _require(self.T_up >= 1, f"T_up must be >= 1, got {self.T_up}")
        _require(self.T_down >= 1, f"T_down must be >= 1, got {self.T_down}")
        _require(0.0 <= self.u_min <= self.u_max,
                 f"need 0 <= u_min <= u_max, got ({self.u_min}, {self.u_max})")
        _require(self.r_max >= 0.0, f"r_max must be >= 0, got {self.r_max}")
        _require(self.zeta >= 0.0, f"zeta must be >= 0, got {self.zeta}")
        _require(len(self.cost_segments) >= 1, "need at least one cost segment")
        _require(all(k > 0 for k in self.kappa_u), "kappa_u entries must be > 0")
        _require(all(k > 0 for k in self.kappa_d), "kappa_d entries must be > 0")
        _require(self.delta_init in (0, 1),
                 f"delta_init must be 0 or 1, got {self.delta_init}")
        _require((self.u_init > 0) == (self.delta_init == 1),
                 "initial state inconsistent: u_init > 0 iff delta_init = 1")
        _require(self.u_init <= self.u_max + 1e-12,
                 f"u_init must not exceed u_max, got {self.u_init}")
        if K is not None:
            _require(len(self.kappa_u) >= K and len(self.kappa_d) >= K,
                     "startup/shutdown cost profiles shorter than horizon")


@dataclass(frozen=True)
class ControllableLoadParams:
    beta_min: float
    beta_max: float
    D: tuple  # demand forecast per step, kW
    varphi: float  # curtailment penalty, EUR per kWh shed

    def validate(self, K: int | None = None):
        _require(0.0 <= self.beta_min <= self.beta_max <= 1.0,
                 f"need 0 <= beta_min <= beta_max <= 1, got "
                 f"({self.beta_min}, {self.beta_max})")
        _require(all(d >= 0 for d in self.D), "demand forecast must be >= 0")
        _require(self.varphi > 0.0, f"varphi must be > 0, got {self.varphi}")
        if K is not None:
            _require(len(self.D) >= K, "demand forecast shorter than horizon")


@dataclass(frozen=True)
class GridParams:
    """Single connection to the utility grid with asymmetric prices."""

    P_max: float
    phi_p: tuple  # purchase price per step, EUR/kWh
    phi_s: tuple  # sell price per step, EUR/kWh
    epsilon: float = DEFAULT_EPSILON

    def validate(self, K: int | None = None):
        _require(self.P_max >= 0.0, f"P_max must be >= 0, got {self.P_max}")
        _require(all(p >= 0 for p in self.phi_p), "purchase prices must be >= 0")
        _require(all(p >= 0 for p in self.phi_s), "sell prices must be >= 0")
        _require(self.epsilon > 0.0, f"epsilon must be > 0, got {self.epsilon}")
        if K is not None:
            _require(len(self.phi_p) >= K and len(self.phi_s) >= K,
                     "price profiles shorter than horizon")

    def big_m(self, K: int) -> float:
        prices = [max(self.phi_p[k], self.phi_s[k]) for k in range(K)]
        return self.P_max * max(prices)


# --------------------------------------------------------------------------
# the block itself
# --------------------------------------------------------------------------


@dataclass
class LocalBlock:
    """One agent's share of the coupled problem.

    `var_index` maps names like "u(3)" to column positions, which keeps
    tests and reports readable.  `box` caches per-coordinate ranges once
    compactness has been verified.
    """

    c: np.ndarray
    G: np.ndarray
    g: np.ndarray
    integrality: np.ndarray
    A: np.ndarray
    var_index: dict
    K: int
    kind: str = "generic"
    box: tuple | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.c.size

    def col(self, name: str) -> int:
        return self.var_index[name]

    def value_of(self, x: np.ndarray, name: str) -> float:
        return float(x[self.var_index[name]])

    def contains(self, x: np.ndarray, tol: float = 1e-7) -> bool:
        if self.G.size and np.any(self.G @ x > self.g + tol):
            return False
        ints = x[self.integrality]
        return bool(np.all(np.abs(ints - np.round(ints)) <= 1e-6))

    def relaxation_lp(self, c=None) -> LinearProgram:
        cost = self.c if c is None else c
        return LinearProgram(cost, self.G, self.g,
                             np.full(self.n, -np.inf), np.full(self.n, np.inf))

    def coordinate_box(self):
        """Min/max of every coordinate over the relaxed polyhedron.

        Doubles as the compactness and nonemptiness verification; raises
        DimensionError when the polyhedron is empty or a coordinate is
        unbounded.
        """
        if self.box is not None:
            return self.box
        lo = np.zeros(self.n)
        hi = np.zeros(self.n)
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = 1.0
            smin = solve_lp(self.relaxation_lp(e))
            smax = solve_lp(self.relaxation_lp(-e))
            if smin.status == INFEASIBLE or smax.status == INFEASIBLE:
                raise DimensionError(f"{self.kind} block polyhedron is empty")
            if smin.status != OPTIMAL or smax.status != OPTIMAL:
                raise DimensionError(
                    f"{self.kind} block coordinate {j} is unbounded")
            lo[j], hi[j] = smin.value, -smax.value
        self.box = (lo, hi)
        return self.box

    @classmethod
    def empty(cls, K: int, kind: str = "exogenous") -> "LocalBlock":
        """Block of a unit with no decision variables (critical load)."""
        blk = cls(c=np.zeros(0), G=np.zeros((0, 0)), g=np.zeros(0),
                  integrality=np.zeros(0, dtype=bool), A=np.zeros((K, 0)),
                  var_index={}, K=K, kind=kind)
        blk.box = (np.zeros(0), np.zeros(0))
        return blk


class _RowBuilder:
    def __init__(self, n):
        self.n = n
        self.rows = []
        self.rhs = []

    def add(self, coeffs: dict, rhs: float):
        row = np.zeros(self.n)
        for j, v in coeffs.items():
            row[j] += v
        self.rows.append(row)
        self.rhs.append(float(rhs))

    def add_equality(self, coeffs: dict, rhs: float):
        self.add(coeffs, rhs)
        self.add({j: -v for j, v in coeffs.items()}, -rhs)

    def add_box(self, j: int, lo: float, hi: float):
        self.add({j: 1.0}, hi)
        self.add({j: -1.0}, -lo)

    def matrices(self):
        return np.array(self.rows).reshape(len(self.rows), self.n), \
            np.array(self.rhs)


# --------------------------------------------------------------------------
# the E matrices of the logical switches
# --------------------------------------------------------------------------


def storage_e_matrices(C: float, epsilon: float):
    """Six-row switch coefficients tying (delta, z) to u for a storage."""
    E1 = np.array([C, -(C + epsilon), C, C, -C, -C])
    E2 = np.array([0.0, 0.0, 1.0, -1.0, 1.0, -1.0])
    E3 = np.array([1.0, -1.0, 1.0, -1.0, 0.0, 0.0])
    E4 = np.array([C, -epsilon, C, C, 0.0, 0.0])
    return E1, E2, E3, E4


def grid_e_matrices(p: GridParams, k: int, K: int):
    """Six-row switch coefficients tying (delta, phi) to u at step k."""
    M = p.big_m(K)
    E1 = np.array([p.P_max, -(p.P_max + p.epsilon), M, M, -M, -M])
    E2 = np.array([0.0, 0.0, 1.0, -1.0, 1.0, -1.0])
    E3 = np.array([1.0, -1.0, p.phi_p[k], -p.phi_p[k], p.phi_s[k], -p.phi_s[k]])
    E4 = np.array([p.P_max, -p.epsilon, M, M, 0.0, 0.0])
    return E1, E2, E3, E4


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _check_horizon(K):
    if not (isinstance(K, (int, np.integer)) and K >= 1):
        raise DimensionError(f"horizon K must be an integer >= 1, got {K}")


def build_storage_block(p: StorageParams, K: int) -> LocalBlock:
    """Storage unit block.

    Variables: x(0..K) state of charge, u(0..K-1) exchanged power,
    z(0..K-1) = delta*u auxiliary, delta(0..K-1) charging flag.
    """
    _check_horizon(K)
    p.validate()
    idx = {}
    pos = 0
    for k in range(K + 1):
        idx[f"x({k})"] = pos
        pos += 1
    for name in ("u", "z", "delta"):
        for k in range(K):
            idx[f"{name}({k})"] = pos
            pos += 1
    n = pos
    b = _RowBuilder(n)
    E1, E2, E3, E4 = storage_e_matrices(p.C, p.epsilon)
    slope_z = p.eta_c - 1.0 / p.eta_d
    slope_u = 1.0 / p.eta_d
    for k in range(K):
        xk, xk1 = idx[f"x({k})"], idx[f"x({k + 1})"]
        uk, zk, dk = idx[f"u({k})"], idx[f"z({k})"], idx[f"delta({k})"]
        b.add_equality({xk1: 1.0, xk: -1.0, zk: -slope_z, uk: -slope_u},
                       -p.x_pl)
        for r in range(6):
            b.add({dk: E1[r], zk: E2[r], uk: -E3[r]}, E4[r])
    for k in range(1, K + 1):
        b.add_box(idx[f"x({k})"], p.x_min, p.x_max)
    b.add_equality({idx["x(0)"]: 1.0}, p.x0)
    for k in range(K):
        b.add_box(idx[f"u({k})"], -p.C, p.C)
        b.add_box(idx[f"z({k})"], -p.C, p.C)
        b.add_box(idx[f"delta({k})"], 0.0, 1.0)
    G, g = b.matrices()
    c = np.zeros(n)
    A = np.zeros((K, n))
    mask = np.zeros(n, dtype=bool)
    for k in range(K):
        c[idx[f"z({k})"]] = 2.0 * p.zeta
        c[idx[f"u({k})"]] = -p.zeta
        A[k, idx[f"u({k})"]] = 1.0
        mask[idx[f"delta({k})"]] = True
    return LocalBlock(c=c, G=G, g=g, integrality=mask, A=A, var_index=idx,
                      K=K, kind="storage")


def build_generator_block(p: GeneratorParams, K: int) -> LocalBlock:
    """Generator block with commitment, ramp and epigraph cost rows.

    Variables per step: u power, delta on/off, nu generation-cost
    epigraph, theta_u / theta_d start/stop cost epigraphs.
    """
    _check_horizon(K)
    p.validate(K)
    idx = {}
    pos = 0
    for name in ("u", "delta", "nu", "theta_u", "theta_d"):
        for k in range(K):
            idx[f"{name}({k})"] = pos
            pos += 1
    n = pos
    b = _RowBuilder(n)

    def d(k):
        return idx[f"delta({k})"]

    # minimum up time: a turn-on at k pins delta(tau) = 1 for the next
    # T_up - 1 steps (range truncated at the end of the horizon)
    for k in range(K):
        for tau in range(k + 1, min(k + p.T_up - 1, K - 1) + 1):
            if k == 0:
                b.add({d(0): 1.0, d(tau): -1.0}, float(p.delta_init))
            else:
                b.add({d(k): 1.0, d(k - 1): -1.0, d(tau): -1.0}, 0.0)
    # minimum down time: a turn-off at k keeps delta(tau) = 0
    for k in range(K):
        for tau in range(k + 1, min(k + p.T_down - 1, K - 1) + 1):
            if k == 0:
                b.add({d(0): -1.0, d(tau): 1.0}, 1.0 - p.delta_init)
            else:
                b.add({d(k - 1): 1.0, d(k): -1.0, d(tau): 1.0}, 1.0)
    for k in range(K):
        uk = idx[f"u({k})"]
        b.add({idx[f"delta({k})"]: p.u_min, uk: -1.0}, 0.0)  # power floor
        b.add({uk: 1.0, idx[f"delta({k})"]: -p.u_max}, 0.0)  # power cap
        if k == 0:
            b.add({uk: 1.0, d(0): -p.r_max}, p.u_init)
            b.add({uk: -1.0, d(0): -p.r_max}, -p.u_init)
        else:
            up = idx[f"u({k - 1})"]
            b.add({uk: 1.0, up: -1.0, d(k): -p.r_max}, 0.0)
            b.add({uk: -1.0, up: 1.0, d(k): -p.r_max}, 0.0)
    seg = [(float(S), float(s)) for S, s in p.cost_segments]
    nu_ub = max(max(s, S * p.u_max + s) for S, s in seg)
    for k in range(K):
        uk, nk = idx[f"u({k})"], idx[f"nu({k})"]
        tu, td = idx[f"theta_u({k})"], idx[f"theta_d({k})"]
        for S, s in seg:
            b.add({uk: S, nk: -1.0}, -s)
        if k == 0:
            b.add({d(0): p.kappa_u[0], tu: -1.0}, p.kappa_u[0] * p.delta_init)
            b.add({d(0): -p.kappa_d[0], td: -1.0}, -p.kappa_d[0] * p.delta_init)
        else:
            b.add({d(k): p.kappa_u[k], d(k - 1): -p.kappa_u[k], tu: -1.0}, 0.0)
            b.add({d(k - 1): p.kappa_d[k], d(k): -p.kappa_d[k], td: -1.0}, 0.0)
        b.add({tu: -1.0}, 0.0)
        b.add({td: -1.0}, 0.0)
        # explicit caps keep the polyhedron compact; the epigraph rows
        # only bound these variables from below
        b.add({nk: 1.0}, nu_ub)
        b.add({tu: 1.0}, p.kappa_u[k])
        b.add({td: 1.0}, p.kappa_d[k])
        b.add_box(idx[f"delta({k})"], 0.0, 1.0)
    G, g = b.matrices()
    c = np.zeros(n)
    A = np.zeros((K, n))
    mask = np.zeros(n, dtype=bool)
    for k in range(K):
        c[idx[f"nu({k})"]] = 1.0
        c[idx[f"theta_u({k})"]] = 1.0
        c[idx[f"theta_d({k})"]] = 1.0
        c[idx[f"delta({k})"]] = p.zeta
        A[k, idx[f"u({k})"]] = -1.0
        mask[idx[f"delta({k})"]] = True
    return LocalBlock(c=c, G=G, g=g, integrality=mask, A=A, var_index=idx,
                      K=K, kind="generator")


def quadratic_cost_segments(a: float, b: float, u_min: float, u_max: float,
                            n_segments: int = 3):
    """Secant linearization of a*u^2 + b*u over [u_min, u_max]."""
    _require(a >= 0.0, f"quadratic coefficient must be >= 0, got {a}")
    _require(n_segments >= 1, "need at least one segment")
    _require(u_max > u_min, "u_max must exceed u_min")
    pts = np.linspace(u_min, u_max, n_segments + 1)
    f = a * pts ** 2 + b * pts
    out = []
    for i in range(n_segments):
        S = (f[i + 1] - f[i]) / (pts[i + 1] - pts[i])
        s = f[i] - S * pts[i]
        out.append((float(S), float(s)))
    return tuple(out)


def build_controllable_load_block(p: ControllableLoadParams, K: int) -> LocalBlock:
    """Curtailable load: box on the curtailment factor, no integers."""
    _check_horizon(K)
    p.validate(K)
    idx = {f"beta({k})": k for k in range(K)}
    b = _RowBuilder(K)
    for k in range(K):
        b.add_box(k, p.beta_min, p.beta_max)
    G, g = b.matrices()
    c = np.array([p.varphi * p.D[k] for k in range(K)])
    A = np.zeros((K, K))
    for k in range(K):
        A[k, k] = -p.D[k]
    return LocalBlock(c=c, G=G, g=g, integrality=np.zeros(K, dtype=bool),
                      A=A, var_index=idx, K=K, kind="controllable_load")


def build_grid_block(p: GridParams, K: int) -> LocalBlock:
    """Grid connection: import/export switch with price-dependent expense."""
    _check_horizon(K)
    p.validate(K)
    idx = {}
    pos = 0
    for name in ("u", "phi", "delta"):
        for k in range(K):
            idx[f"{name}({k})"] = pos
            pos += 1
    n = pos
    M = p.big_m(K)
    b = _RowBuilder(n)
    for k in range(K):
        uk, fk, dk = idx[f"u({k})"], idx[f"phi({k})"], idx[f"delta({k})"]
        E1, E2, E3, E4 = grid_e_matrices(p, k, K)
        for r in range(6):
            b.add({dk: E1[r], fk: E2[r], uk: -E3[r]}, E4[r])
        b.add_box(uk, -p.P_max, p.P_max)
        b.add_box(fk, -M, M)
        b.add_box(dk, 0.0, 1.0)
    G, g = b.matrices()
    c = np.zeros(n)
    A = np.zeros((K, n))
    mask = np.zeros(n, dtype=bool)
    for k in range(K):
        c[idx[f"phi({k})"]] = 1.0
        A[k, idx[f"u({k})"]] = -1.0
        mask[idx[f"delta({k})"]] = True
    return LocalBlock(c=c, G=G, g=g, integrality=mask, A=A, var_index=idx,
                      K=K, kind="grid")


# --------------------------------------------------------------------------
# balance right-hand side and the assembled problem
# --------------------------------------------------------------------------


def power_balance_rhs(renewables, controllable_demands, critical_demands,
                      K: int | None = None) -> np.ndarray:
    """Exogenous side of the power balance.

    b(k) = -sum controllable forecasts - sum critical forecasts
           + sum renewable outputs, all at step k.
    """
    profiles = [np.asarray(v, dtype=float).ravel()
                for v in (*renewables, *controllable_demands,
                          *critical_demands)]
    if K is None:
        if not profiles:
            raise DimensionError("cannot infer horizon from empty inputs")
        K = profiles[0].size
    for v in profiles:
        if v.size != K:
            raise DimensionError(
                f"profile length {v.size} does not match horizon {K}")
    b = np.zeros(K)
    for v in renewables:
        b += np.asarray(v, dtype=float)
    for v in controllable_demands:
        b -= np.asarray(v, dtype=float)
    for v in critical_demands:
        b -= np.asarray(v, dtype=float)
    return b


def assemble_centralized(blocks, b) -> tuple[LinearProgram, list]:
    """Stack blocks into one MILP with the equality balance sum A_i x_i = b.

    Equality rows are stored as paired inequalities so the same row
    representation serves both the LP and MILP engines.  Returns the
    program and the per-block column offsets.
    """
    b = np.asarray(b, dtype=float).ravel()
    K = blocks[0].K
    if b.size != K:
        raise DimensionError(f"balance vector length {b.size} != horizon {K}")
    for blk in blocks:
        if blk.K != K:
            raise DimensionError("blocks disagree on horizon length")
    n_total = sum(blk.n for blk in blocks)
    m_total = sum(blk.G.shape[0] for blk in blocks) + 2 * K
    G = np.zeros((m_total, n_total))
    g = np.zeros(m_total)
    c = np.zeros(n_total)
    mask = np.zeros(n_total, dtype=bool)
    offsets = []
    row = 0
    col = 0
    for blk in blocks:
        offsets.append(col)
        mb = blk.G.shape[0]
        G[row:row + mb, col:col + blk.n] = blk.G
        g[row:row + mb] = blk.g
        c[col:col + blk.n] = blk.c
        mask[col:col + blk.n] = blk.integrality
        row += mb
        col += blk.n
    for i, blk in enumerate(blocks):
        G[row:row + K, offsets[i]:offsets[i] + blk.n] = blk.A
        G[row + K:row + 2 * K, offsets[i]:offsets[i] + blk.n] = -blk.A
    g[row:row + K] = b
    g[row + K:row + 2 * K] = -b
    lp = LinearProgram(c, G, g, np.full(n_total, -np.inf),
                       np.full(n_total, np.inf), integrality=mask)
    return lp, offsets
