"""Worst-case violation certificate and run diagnostics.

After a run, each agent is either integral (its relaxed block solution
already lands in the mixed-integer set) or not.  The certificate bounds
the asymptotic violation of the lifted balance band componentwise:
integral agents contribute their relaxed recourse vector, the others a
scalar built from an auxiliary problem at the componentwise resource
lower bound.  The bound is a sum of per-agent terms, so agents can also
average it over the communication graph and everyone ends up with the
network-wide certificate without a collector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .solver import (OPTIMAL, LinearProgram, Tolerances, solve_lp,
                     solve_milp, split_singleton_rows)
from .stochastic import RecourseCost, ScenarioSet, recourse_phi

INTEGRALITY_DETECTION_TOL = 1e-6


class CertificateError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# per-agent pieces
# --------------------------------------------------------------------------


def compute_lower_bound(lifted, cap: float,
                        tol: Tolerances = Tolerances()) -> np.ndarray:
    """Componentwise floor of H x - eta over the relaxed block.

    One LP per component; the eta part separates and contributes -cap
    exactly, so each LP only minimizes the coupling row over the block.
    """
    blk = lifted.base
    dim = lifted.eta_dim
    out = np.empty(dim)
    if blk.n == 0:
        out.fill(-cap)
        return out
    G0, g0, lo0, hi0 = split_singleton_rows(
        blk.G, blk.g, np.full(blk.n, -np.inf), np.full(blk.n, np.inf))
    for j in range(dim):
        sol = solve_lp(LinearProgram(lifted.H[j], G0, g0, lo0, hi0), tol)
        if sol.status != OPTIMAL:
            raise CertificateError(
                f"lower-bound LP for component {j} ended {sol.status}")
        out[j] = sol.value - cap
    return out


def compute_auxiliary(lifted, ell: np.ndarray, cost: RecourseCost,
                      cap: float, tol: Tolerances = Tolerances(),
                      max_doublings: int = 60):
    """Mixed-integer optimum against the floored allocation.

    The recourse cap almost always needs one doubling relative to the
    floor's cap: at the floor, every coupling component sits `cap` below
    its row minimum plus the row's spread, so a same-size cap cannot
    absorb the spread.  Doubles until feasible and returns the cap used.
    """
    blk = lifted.base
    dim = lifted.eta_dim
    n = blk.n
    G0, g0, lo0, hi0 = split_singleton_rows(
        blk.G, blk.g, np.full(n, -np.inf), np.full(n, np.inf))
    m0 = G0.shape[0]
    G = np.zeros((m0 + dim, n + dim))
    if n:
        G[:m0, :n] = G0
        G[m0:, :n] = lifted.H
    G[m0:, n:] = -np.eye(dim)
    g = np.concatenate([g0, ell])
    c = np.concatenate([blk.c, cost.d])
    mask = np.concatenate([blk.integrality, np.zeros(dim, dtype=bool)])
    lo = np.concatenate([lo0, np.zeros(dim)])
    used = cap
    for _ in range(max_doublings):
        hi = np.concatenate([hi0, np.full(dim, used)])
        sol = solve_milp(LinearProgram(c, G, g, lo, hi, integrality=mask), tol)
        if sol.status == OPTIMAL:
            return sol.x[:n], sol.x[n:], used
        used *= 2.0
    raise CertificateError("auxiliary problem stayed infeasible after "
                           f"{max_doublings} cap doublings")


def is_integral(block, z: np.ndarray,
                tol: float = INTEGRALITY_DETECTION_TOL) -> bool:
    ints = z[block.integrality]
    return bool(np.all(np.abs(ints - np.round(ints)) <= tol))


# --------------------------------------------------------------------------
# certificate
# --------------------------------------------------------------------------


@dataclass
class ViolationCertificate:
    bound: np.ndarray
    measured: np.ndarray
    in_integral_set: list
    contributions: list  # per-agent vectors, length 2RK each
    d_min: float
    label: str  # "converged" when allocations had settled, else "empirical"
    caps_used: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return bool(np.all(self.measured <= self.bound + 1e-5))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "d_min": self.d_min,
            "bound": [float(v) for v in self.bound],
            "measured": [float(v) for v in self.measured],
            "in_integral_set": [bool(b) for b in self.in_integral_set],
            "contributions": [[float(v) for v in c]
                              for c in self.contributions],
            "bound_holds_componentwise": self.holds,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def violation_certificate(result, cost: RecourseCost,
                          tol: Tolerances = Tolerances()) -> ViolationCertificate:
    """Assemble the certificate from a finished run.

    Uses the final allocation as the converged-allocation proxy (the
    run labels whether allocations had actually settled); agents whose
    relaxed block solution is integral contribute their relaxed
    recourse, the rest the auxiliary-problem scalar spread over all
    components.
    """
    if cost.d_min <= 0.0:
        raise CertificateError("certificate needs d > 0 componentwise")
    agents = result.agents
    dim = agents[0].lifted.eta_dim
    bound = np.zeros(dim)
    contributions = []
    flags = []
    caps = []
    measured = -result.h.copy()
    for a in agents:
        measured += a.lifted.H @ a.x_mi
        integral = is_integral(a.lifted.base, a.z) if a.lifted.base.n else True
        flags.append(integral)
        if integral:
            contrib = a.eta_relax.copy()
            caps.append(result.eta_cap)
        else:
            ell = compute_lower_bound(a.lifted, result.eta_cap, tol)
            x_l, eta_l, used = compute_auxiliary(a.lifted, ell, cost,
                                                 result.eta_cap, tol)
            caps.append(used)
            blk = a.lifted.base
            scalar = (blk.c @ (x_l - a.x_mi) + cost.d @ eta_l) / cost.d_min
            contrib = np.full(dim, scalar)
        contributions.append(contrib)
        bound += contrib
    return ViolationCertificate(
        bound=bound, measured=measured, in_integral_set=flags,
        contributions=contributions, d_min=cost.d_min,
        label=result.converged_label, caps_used=caps)


# --------------------------------------------------------------------------
# distributed averaging of the certificate
# --------------------------------------------------------------------------


def consensus_bound(initial_values, graph, rounds: int):
    """Average-consensus on the per-agent certificate contributions.

    `initial_values` holds one vector per agent, already scaled by the
    agent count (so the average equals the summed bound).  Returns the
    per-agent estimates after `rounds` Metropolis averaging steps and
    the worst deviation from the exact average.
    """
    V = np.array([np.asarray(v, dtype=float) for v in initial_values])
    exact = V.mean(axis=0)
    W = graph.metropolis_weights()
    for _ in range(rounds):
        V = W @ V
    deviation = float(np.max(np.abs(V - exact)))
    return V, deviation


def distributed_certificate(cert: ViolationCertificate, graph,
                            rounds: int = 500):
    """Each agent's view of the network bound after consensus rounds."""
    N = len(cert.contributions)
    initial = [N * c for c in cert.contributions]
    return consensus_bound(initial, graph, rounds)


# --------------------------------------------------------------------------
# balance reporting
# --------------------------------------------------------------------------


def coupling_report(blocks, xs, scen: ScenarioSet, cost: RecourseCost) -> dict:
    """Signed per-scenario balance residuals of a mixed-integer solution.

    residual[r, k] = sum_i [A_i x_i]_k - b_r(k); the expected recourse
    prices the positive and negative parts by scenario probability.
    """
    K = scen.K
    total = np.zeros(K)
    for blk, x in zip(blocks, xs):
        if blk.n:
            total += blk.A @ x
    residuals = np.array([total - b for b in scen.b_r])
    expected = sum(scen.pi[r] * recourse_phi(residuals[r, k],
                                             cost.q_plus, cost.q_minus)
                   for r in range(scen.R) for k in range(K))
    return {
        "residuals": residuals,
        "max_positive": float(np.max(np.maximum(residuals, 0.0))),
        "max_negative": float(np.max(np.maximum(-residuals, 0.0))),
        "expected_recourse": float(expected),
        "total_injection": total,
    }
