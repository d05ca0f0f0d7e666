"""Synchronized allocation-exchange algorithm over a communication graph.

Each agent owns an allocation y_i of the lifted balance band (the
allocations always sum to the stacked right-hand side h).  A round
consists of every agent solving its relaxed local problem to get the
multiplier of the allocation rows, then neighbors trading allocation
along each edge proportionally to their multiplier disagreement.
Stopping at any round and re-solving the local problems with
integrality restored yields a mixed-integer point that satisfies the
lifted coupling by construction, so intermediate solutions are always
feasible for the two-stage problem.

One round is a synchronous barrier: all multipliers are computed from
the round's published allocations before any allocation moves.  The
per-agent solves inside a round are independent (separate solver
instances) and could run in parallel; they are executed sequentially
here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DimensionError
from .solver import (OPTIMAL, LinearProgram, Tolerances, solve_lp, solve_milp,
                     split_singleton_rows)
from .stochastic import (LiftedBlock, RecourseCost, ScenarioSet, build_h,
                         lift_block)


class AgentSolveError(RuntimeError):
    """A local subproblem failed; carries the agent index and status."""

    def __init__(self, agent: int, status: str, stage: str):
        self.agent = agent
        self.status = status
        self.stage = stage
        super().__init__(f"agent {agent}: {stage} solve ended {status}")


class GraphError(ValueError):
    """Malformed communication graph."""


# --------------------------------------------------------------------------
# communication graph
# --------------------------------------------------------------------------


@dataclass
class CommGraph:
    n: int
    edges: list  # (i, j) with i < j, no duplicates

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i},{j}) outside node range")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        self.edges = sorted(seen)
        if not self.is_connected():
            raise GraphError("graph is not connected")

    @property
    def neighbors(self):
        out = [[] for _ in range(self.n)]
        for i, j in self.edges:
            out[i].append(j)
            out[j].append(i)
        return out

    def degree(self):
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj = self.neighbors
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    def metropolis_weights(self) -> np.ndarray:
        """Symmetric doubly stochastic averaging matrix."""
        deg = self.degree()
        W = np.zeros((self.n, self.n))
        for i, j in self.edges:
            w = 1.0 / (1.0 + max(deg[i], deg[j]))
            W[i, j] = W[j, i] = w
        np.fill_diagonal(W, 1.0 - W.sum(axis=1))
        return W


def generate_graph(N: int, kind: str = "random", seed=None,
                   p: float = 0.3) -> CommGraph:
    """Connected undirected test graphs: path, cycle, or random with retry.

    The random kind redraws up to 100 times and falls back to a cycle,
    so the result is always connected and deterministic per seed.
    """
    if N < 1:
        raise GraphError(f"need at least one node, got {N}")
    if N == 1:
        return CommGraph(1, [])
    if kind == "path" or N == 2:
        return CommGraph(N, [(i, i + 1) for i in range(N - 1)])
    if kind == "cycle":
        return CommGraph(N, [(i, i + 1) for i in range(N - 1)] + [(0, N - 1)])
    if kind == "random":
        rng = np.random.default_rng(seed)
        for _ in range(100):
            edges = [(i, j) for i in range(N) for j in range(i + 1, N)
                     if rng.random() < p]
            try:
                return CommGraph(N, edges)
            except GraphError:
                continue
        return CommGraph(N, [(i, i + 1) for i in range(N - 1)] + [(0, N - 1)])
    raise GraphError(f"unknown graph kind {kind!r}")


# --------------------------------------------------------------------------
# step sizes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepSizeSchedule:
    """alpha(t) factory.

    diminishing: a / (t + b), square-summable but not summable, the
    shape the convergence result assumes.  piecewise: alpha0 scaled by
    `factor` every `period` rounds (the experiment-style schedule; it is
    geometric, hence not covered by the convergence assumption, but
    works well in practice).
    """

    kind: str
    a: float = 1.0
    b: float = 1.0
    alpha0: float = 3.0
    factor: float = 0.5
    period: int = 100

    @classmethod
    def diminishing(cls, a: float, b: float) -> "StepSizeSchedule":
        if a <= 0 or b <= 0:
            raise ValueError("diminishing schedule needs a > 0, b > 0")
        return cls(kind="diminishing", a=a, b=b)

    @classmethod
    def piecewise(cls, alpha0: float, factor: float,
                  period: int) -> "StepSizeSchedule":
        if alpha0 <= 0 or factor <= 0 or period < 1:
            raise ValueError("piecewise schedule needs positive parameters")
        return cls(kind="piecewise", alpha0=alpha0, factor=factor,
                   period=period)

    def __call__(self, t: int) -> float:
        if self.kind == "diminishing":
            return self.a / (t + self.b)
        return self.alpha0 * self.factor ** (t // self.period)


# --------------------------------------------------------------------------
# agent state and the local solves
# --------------------------------------------------------------------------


@dataclass
class AgentState:
    """Everything one agent carries between rounds."""

    index: int
    lifted: LiftedBlock
    d: np.ndarray
    y: np.ndarray
    mu: np.ndarray | None = None
    z: np.ndarray | None = None          # relaxed primal block
    eta_relax: np.ndarray | None = None
    x_mi: np.ndarray | None = None       # last mixed-integer finalize
    eta_mi: np.ndarray | None = None
    relaxed: bool = True
    _template: tuple | None = field(default=None, repr=False)

    def _subproblem(self, eta_cap: float):
        """Cached [z | eta] subproblem; only the allocation rhs changes."""
        if self._template is None:
            blk = self.lifted.base
            H = self.lifted.H
            dim = H.shape[0]
            n = blk.n
            G0, g0, lo0, hi0 = split_singleton_rows(
                blk.G, blk.g, np.full(n, -np.inf), np.full(n, np.inf))
            m0 = G0.shape[0]
            G = np.zeros((m0 + dim, n + dim))
            if n:
                G[:m0, :n] = G0
                G[m0:, :n] = H
            G[m0:, n:] = -np.eye(dim)
            g = np.concatenate([g0, np.zeros(dim)])
            c = np.concatenate([blk.c, self.d])
            lo = np.concatenate([lo0, np.zeros(dim)])
            hi = np.concatenate([hi0, np.full(dim, np.nan)])  # cap filled below
            mask = np.concatenate([blk.integrality,
                                   np.zeros(dim, dtype=bool)])
            self._template = (LinearProgram(c, G, g, lo, hi, integrality=mask),
                              m0, dim, n)
        lp, m0, dim, n = self._template
        lp.hi[n:] = eta_cap
        return lp, m0, dim, n


def local_multiplier_step(agent: AgentState, eta_cap: float,
                          tol: Tolerances = Tolerances()) -> np.ndarray:
    """Solve the relaxed local problem at the current allocation.

    Returns the multiplier of the allocation rows (duals of
    H z - eta <= y); records the relaxed primal pair for diagnostics
    and integrality detection.
    """
    lp, m0, dim, n = agent._subproblem(eta_cap)
    lp.g[m0:] = agent.y
    relaxed = LinearProgram(lp.c, lp.G, lp.g, lp.lo, lp.hi)
    sol = solve_lp(relaxed, tol)
    if sol.status != OPTIMAL:
        raise AgentSolveError(agent.index, sol.status, "allocation LP")
    agent.mu = sol.duals[m0:].copy()
    agent.z = sol.x[:n].copy()
    agent.eta_relax = sol.x[n:].copy()
    return agent.mu


def finalize_mixed_integer(agent: AgentState, eta_cap: float,
                           tol: Tolerances = Tolerances()):
    """Mixed-integer recovery at the current allocation."""
    lp, m0, dim, n = agent._subproblem(eta_cap)
    lp.g[m0:] = agent.y
    sol = solve_milp(lp, tol)
    if sol.status != OPTIMAL:
        raise AgentSolveError(agent.index, sol.status, "recovery MILP")
    agent.x_mi = sol.x[:n].copy()
    agent.eta_mi = sol.x[n:].copy()
    return agent.x_mi, agent.eta_mi


def init_allocations(h: np.ndarray, N: int, mode: str = "uniform",
                     seed=None) -> list:
    """Starting allocations summing to h exactly.

    uniform: equal shares, the last agent absorbing the floating-point
    remainder.  random: seeded zero-sum perturbations on top.
    """
    if N < 1:
        raise ValueError("need at least one agent")
    h = np.asarray(h, dtype=float)
    share = h / N
    ys = [share.copy() for _ in range(N - 1)]
    if mode == "random" and N > 1:
        rng = np.random.default_rng(seed)
        scale = 1.0 + np.abs(h) / N
        for y in ys:
            y += rng.normal(0.0, 0.1 * scale)
    elif mode not in ("uniform", "random"):
        raise ValueError(f"unknown allocation mode {mode!r}")
    last = h.copy()
    for y in ys:
        last = last - y
    ys.append(last)
    return ys


def exchange_and_update(states, graph: CommGraph, alpha: float):
    """One synchronous allocation trade along every edge.

    Applied per edge with exactly opposite increments, so the total
    allocation is conserved to the last bit.
    """
    mus = [a.mu for a in states]
    for i, j in graph.edges:
        delta = alpha * (mus[i] - mus[j])
        states[i].y += delta
        states[j].y -= delta


# --------------------------------------------------------------------------
# the full run
# --------------------------------------------------------------------------


@dataclass
class RunTrace:
    iters: list = field(default_factory=list)
    incumbent_cost: list = field(default_factory=list)
    coupling_viol_pos: list = field(default_factory=list)
    coupling_viol_neg: list = field(default_factory=list)
    alloc_residual: list = field(default_factory=list)
    statuses: list = field(default_factory=list)
    coupling_vectors: list = field(default_factory=list)
    balance_injection: list = field(default_factory=list)  # sum A_i x_i, K-dim
    eta_total: list = field(default_factory=list)          # sum eta_i, 2RK-dim
    relax_cost_all: list = field(default_factory=list)
    alloc_residual_all: list = field(default_factory=list)

    def rows(self):
        for idx in range(len(self.iters)):
            yield (self.iters[idx], self.incumbent_cost[idx],
                   self.coupling_viol_pos[idx], self.coupling_viol_neg[idx],
                   self.alloc_residual[idx])


@dataclass
class RunResult:
    agents: list
    trace: RunTrace
    h: np.ndarray
    eta_cap: float
    converged_label: str
    schedule: StepSizeSchedule
    T_f: int

    @property
    def solution(self):
        return [(a.x_mi, a.eta_mi) for a in self.agents]

    def incumbent_cost(self) -> float:
        return float(sum(a.lifted.base.c @ a.x_mi + a.d @ a.eta_mi
                         for a in self.agents))

    def total_coupling(self) -> np.ndarray:
        out = -self.h.copy()
        for a in self.agents:
            out += a.lifted.H @ a.x_mi - a.eta_mi
        return out


def recourse_cap(blocks, scen: ScenarioSet) -> float:
    """Crude certified overestimate of any useful recourse magnitude.

    Twice (max |b_r(k)| + total coupling row mass), where each block's
    mass bounds |A_i x_i| via per-coordinate boxes.  Large on purpose:
    the cap must never bind at an optimum.
    """
    b_max = max(float(np.max(np.abs(b))) for b in scen.b_r)
    mass = 0.0
    for blk in blocks:
        if blk.n == 0:
            continue
        lo, hi = blk.coordinate_box()
        radius = np.maximum(np.abs(lo), np.abs(hi))
        mass += float(np.max(np.abs(blk.A) @ radius)) if blk.A.size else 0.0
    return 2.0 * (b_max + mass)


def run(blocks, scen: ScenarioSet, cost: RecourseCost, graph: CommGraph,
        schedule: StepSizeSchedule, T_f: int, finalize_every: int = 10,
        init_mode: str = "uniform", init_seed=None, eta_cap: float | None = None,
        tol: Tolerances = Tolerances()) -> RunResult:
    """Execute T_f rounds and return the finalized solution plus trace.

    Logged iterations are {0, 1, multiples of finalize_every, T_f}; the
    allocation conservation residual is recorded at every round.  The
    recourse cap is doubled and the round redone if any local optimum
    ever touches it (it should not; the cap is a safety net, see
    `recourse_cap`).
    """
    if T_f < 0:
        raise ValueError("T_f must be >= 0")
    if graph.n != len(blocks):
        raise DimensionError(
            f"graph has {graph.n} nodes but {len(blocks)} blocks given")
    h = build_h(scen)
    if eta_cap is None:
        eta_cap = recourse_cap(blocks, scen)
    ys = init_allocations(h, len(blocks), mode=init_mode, seed=init_seed)
    agents = [AgentState(index=i, lifted=lift_block(blk, scen.R),
                         d=cost.d.copy(), y=ys[i])
              for i, blk in enumerate(blocks)]
    trace = RunTrace()
    log_set = {0, 1, T_f} | {t for t in range(0, T_f + 1, max(finalize_every, 1))}
    label = "empirical"
    prev_logged_y = None

    for t in range(T_f + 1):
        residual = float(np.max(np.abs(
            sum(a.y for a in agents) - h))) if agents else 0.0
        trace.alloc_residual_all.append(residual)
        for a in agents:
            while True:
                try:
                    local_multiplier_step(a, eta_cap, tol)
                except AgentSolveError as e:
                    raise AgentSolveError(
                        a.index, e.status,
                        f"round {t} allocation LP (y_i = {a.y!r})") from e
                if np.max(a.eta_relax, initial=0.0) < eta_cap * (1 - 1e-9):
                    break
                eta_cap *= 2.0  # cap touched: enlarge and redo
        trace.relax_cost_all.append(float(sum(
            a.lifted.base.c @ a.z + a.d @ a.eta_relax for a in agents)))
        if t in log_set:
            statuses = []
            for a in agents:
                while True:
                    finalize_mixed_integer(a, eta_cap, tol)
                    if np.max(a.eta_mi, initial=0.0) < eta_cap * (1 - 1e-9):
                        break
                    eta_cap *= 2.0
                statuses.append(OPTIMAL)
            coupling = -h.copy()
            injection = np.zeros(scen.K)
            eta_sum = np.zeros(h.size)
            for a in agents:
                coupling += a.lifted.H @ a.x_mi - a.eta_mi
                eta_sum += a.eta_mi
                if a.lifted.base.n:
                    injection += a.lifted.base.A @ a.x_mi
            trace.balance_injection.append(injection)
            trace.eta_total.append(eta_sum)
            trace.iters.append(t)
            trace.incumbent_cost.append(float(sum(
                a.lifted.base.c @ a.x_mi + a.d @ a.eta_mi for a in agents)))
            trace.coupling_viol_pos.append(float(np.max(
                np.maximum(coupling, 0.0), initial=0.0)))
            trace.coupling_viol_neg.append(float(np.max(
                np.maximum(-coupling, 0.0), initial=0.0)))
            trace.alloc_residual.append(residual)
            trace.statuses.append(statuses)
            trace.coupling_vectors.append(coupling)
            y_snapshot = np.concatenate([a.y for a in agents])
            if prev_logged_y is not None and t == T_f:
                moved = float(np.max(np.abs(y_snapshot - prev_logged_y)))
                label = "converged" if moved < 1e-6 else "empirical"
            prev_logged_y = y_snapshot
        if t < T_f:
            exchange_and_update(agents, graph, schedule(t))

    return RunResult(agents=agents, trace=trace, h=h, eta_cap=eta_cap,
                     converged_label=label, schedule=schedule, T_f=T_f)
