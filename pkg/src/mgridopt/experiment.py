"""Config-driven experiment runner and Monte Carlo batch driver.

A run writes a fixed artifact set into its output directory:

    config.yaml                resolved copy of the input config
    trace.csv                  iter, incumbent_cost,
                               max_coupling_violation_pos (above the band),
                               max_coupling_violation_neg (slack below),
                               alloc_residual
    certificate.json           violation certificate + consensus check
    solution.json              per-agent solution vectors and allocations
    report_consumption.csv     step, consumed_kw, curtailed_kw
    report_storage.csv         step, exchange_kw, level_kwh
    report_grid.csv            step, exchange_kw
    report_power_fraction.csv  step, generators, renewables, grid

Everything is a pure function of (config, seeds): identical inputs give
byte-identical artifacts.  Floats are serialized with repr (shortest
round-trip), timestamps never enter any file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import distributed_certificate, violation_certificate
from .config import ConfigError, ExperimentConfig, Problem, build_problem
from .dialgo import RunResult, run
OUTPUT_ROOT_ENV = "MGRIDOPT_OUT"
TRACE_HEADER = ("iter,incumbent_cost,max_coupling_violation_pos,"
                "max_coupling_violation_neg,alloc_residual")


def _fmt(v) -> str:
    return repr(float(v))


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


@dataclass
class ExperimentResult:
    out_dir: Path
    problem: Problem
    result: RunResult
    certificate: object

    @property
    def trace(self):
        return self.result.trace


def write_trace_csv(path, trace):
    lines = [TRACE_HEADER]
    for it, cost, pos, neg, resid in trace.rows():
        lines.append(",".join([str(it), _fmt(cost), _fmt(pos), _fmt(neg),
                               _fmt(resid)]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path):
    """Round-trip reader for the module's own trace format."""
    lines = Path(path).read_text().strip().splitlines()
    if lines[0] != TRACE_HEADER:
        raise ConfigError(f"{path}: unexpected trace header {lines[0]!r}")
    rows = []
    for ln in lines[1:]:
        it, cost, pos, neg, resid = ln.split(",")
        rows.append((int(it), float(cost), float(pos), float(neg),
                     float(resid)))
    return rows


def _write_csv(path, header, rows):
    lines = [header]
    for row in rows:
        lines.append(",".join([str(row[0])] + [_fmt(v) for v in row[1:]]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Reader for every CSV this module emits: (column names, float rows)."""
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ConfigError(f"{path}: ragged row {ln!r}")
        rows.append([float(v) for v in cells])
    return header, rows


def solution_reports(problem: Problem, xs: list) -> dict:
    """Figure-data series from a solved instance.

    consumed = critical + uncurtailed controllable demand; curtailed is
    the shed part; power fractions split the supply side between
    generators, (expected) renewables and grid import.
    """
    K = problem.scen.K
    consumed = np.zeros(K)
    curtailed = np.zeros(K)
    for D in problem.lo_demands:
        consumed += D
    for idx, D in zip(problem.load_indices, problem.cl_demands):
        blk = problem.blocks[idx]
        beta = np.array([blk.value_of(xs[idx], f"beta({k})")
                         for k in range(K)])
        consumed += (1.0 - beta) * D
        curtailed += beta * D
    storage_u = np.zeros(K)
    storage_level = np.zeros(K)
    for idx in problem.storage_indices:
        blk = problem.blocks[idx]
        storage_u += [blk.value_of(xs[idx], f"u({k})") for k in range(K)]
        storage_level += [blk.value_of(xs[idx], f"x({k + 1})")
                          for k in range(K)]
    gen_u = np.zeros(K)
    for idx in problem.generator_indices:
        blk = problem.blocks[idx]
        gen_u += [blk.value_of(xs[idx], f"u({k})") for k in range(K)]
    grid_blk = problem.blocks[problem.grid_index]
    grid_u = np.array([grid_blk.value_of(xs[problem.grid_index], f"u({k})")
                       for k in range(K)])
    renewable = np.zeros(K)
    for r, bundle in enumerate(problem.scen.realizations):
        for profile in bundle:
            renewable += problem.scen.pi[r] * np.asarray(profile)
    supply = np.vstack([gen_u, renewable, np.maximum(grid_u, 0.0)])
    totals = supply.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        fractions = np.where(totals > 0, supply / np.where(totals > 0,
                                                           totals, 1.0), 0.0)
    return {
        "consumed_kw": consumed,
        "curtailed_kw": curtailed,
        "storage_exchange_kw": storage_u,
        "storage_level_kwh": storage_level,
        "grid_exchange_kw": grid_u,
        "fraction_generators": fractions[0],
        "fraction_renewables": fractions[1],
        "fraction_grid": fractions[2],
    }


def write_reports(out: Path, problem: Problem, xs: list):
    rep = solution_reports(problem, xs)
    K = problem.scen.K
    _write_csv(out / "report_consumption.csv", "step,consumed_kw,curtailed_kw",
               [(k, rep["consumed_kw"][k], rep["curtailed_kw"][k])
                for k in range(K)])
    _write_csv(out / "report_storage.csv", "step,exchange_kw,level_kwh",
               [(k, rep["storage_exchange_kw"][k], rep["storage_level_kwh"][k])
                for k in range(K)])
    _write_csv(out / "report_grid.csv", "step,exchange_kw",
               [(k, rep["grid_exchange_kw"][k]) for k in range(K)])
    _write_csv(out / "report_power_fraction.csv",
               "step,generators,renewables,grid",
               [(k, rep["fraction_generators"][k], rep["fraction_renewables"][k],
                 rep["fraction_grid"][k]) for k in range(K)])


def write_solution(path, problem: Problem, result: RunResult):
    payload = {
        "agent_names": problem.agent_names,
        "label": result.converged_label,
        "eta_cap": result.eta_cap,
        "T_f": result.T_f,
        "x": [[float(v) for v in a.x_mi] for a in result.agents],
        "eta": [[float(v) for v in a.eta_mi] for a in result.agents],
        "y": [[float(v) for v in a.y] for a in result.agents],
        "z_relaxed": [[float(v) for v in a.z] for a in result.agents],
        "eta_relaxed": [[float(v) for v in a.eta_relax]
                        for a in result.agents],
        "incumbent_cost": result.incumbent_cost(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, scenario_seed=None,
                   consensus_rounds: int = 500) -> ExperimentResult:
    """Build, run, certify, and write the artifact set."""
    problem = build_problem(cfg, scenario_seed=scenario_seed)
    out = Path(out_dir) if out_dir is not None else \
        output_root() / cfg.raw.get("output_dir", "out")
    out.mkdir(parents=True, exist_ok=True)
    result = run(problem.blocks, problem.scen, problem.cost, problem.graph,
                 problem.schedule, problem.T_f,
                 finalize_every=problem.finalize_every,
                 tol=problem.tolerances)
    cert = violation_certificate(result, problem.cost)
    _, deviation = distributed_certificate(cert, problem.graph,
                                           rounds=consensus_rounds)
    cert_payload = cert.to_dict()
    cert_payload["consensus"] = {"rounds": consensus_rounds,
                                 "max_deviation": deviation}
    cfg.to_yaml(out / "config.yaml")
    write_trace_csv(out / "trace.csv", result.trace)
    (out / "certificate.json").write_text(
        json.dumps(cert_payload, indent=2, sort_keys=True) + "\n")
    write_solution(out / "solution.json", problem, result)
    write_reports(out, problem, [a.x_mi for a in result.agents])
    return ExperimentResult(out_dir=out, problem=problem, result=result,
                            certificate=cert)


def run_montecarlo(cfg: ExperimentConfig, trials: int, out_dir=None,
                   consensus_rounds: int = 200) -> Path:
    """Independent trials differing only in the scenario seed.

    Trial t draws scenarios with seed (scenario_seed + t); unit
    parameters and topology stay fixed.  Writes trial_XXX/ artifact
    sets plus aggregate.csv with per-iteration mean/std of the
    incumbent cost and the extreme coupling values across trials.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    out = Path(out_dir) if out_dir is not None else \
        output_root() / (cfg.raw.get("output_dir", "out") + "_mc")
    out.mkdir(parents=True, exist_ok=True)
    base_seed = cfg.seeds.get("scenario", 0)
    traces = []
    for t in range(trials):
        sub = out / f"trial_{t:03d}"
        try:
            res = run_experiment(cfg, out_dir=sub,
                                 scenario_seed=(base_seed, t),
                                 consensus_rounds=consensus_rounds)
        except Exception as e:
            raise RuntimeError(
                f"trial {t} (scenario seed {(base_seed, t)}) failed: {e}"
            ) from e
        traces.append(res.trace)
    iters = traces[0].iters
    lines = ["iter,cost_mean,cost_std,viol_pos_max,viol_neg_max"]
    for i, it in enumerate(iters):
        costs = np.array([tr.incumbent_cost[i] for tr in traces])
        pos = max(tr.coupling_viol_pos[i] for tr in traces)
        neg = max(tr.coupling_viol_neg[i] for tr in traces)
        lines.append(",".join([str(it), _fmt(costs.mean()),
                               _fmt(costs.std()), _fmt(pos), _fmt(neg)]))
    (out / "aggregate.csv").write_text("\n".join(lines) + "\n")
    return out


def recertify(run_dir, consensus_rounds: int = 500) -> dict:
    """Recompute the certificate of a saved run from its artifacts.

    Rebuilds the problem from the stored config, restores the final
    allocations, re-solves the local problems (deterministic), and
    compares against the stored certificate.
    """
    from .dialgo import AgentState, finalize_mixed_integer, \
        local_multiplier_step
    from .stochastic import lift_block

    run_dir = Path(run_dir)
    cfg = ExperimentConfig.from_yaml(run_dir / "config.yaml")
    saved = json.loads((run_dir / "solution.json").read_text())
    problem = build_problem(cfg)
    agents = []
    for i, blk in enumerate(problem.blocks):
        a = AgentState(index=i, lifted=lift_block(blk, problem.scen.R),
                       d=problem.cost.d.copy(),
                       y=np.array(saved["y"][i], dtype=float))
        local_multiplier_step(a, saved["eta_cap"])
        finalize_mixed_integer(a, saved["eta_cap"])
        agents.append(a)

    class _Shim:
        pass

    shim = _Shim()
    shim.agents = agents
    from .stochastic import build_h
    shim.h = build_h(problem.scen)
    shim.eta_cap = saved["eta_cap"]
    shim.converged_label = saved["label"]
    cert = violation_certificate(shim, problem.cost)
    _, deviation = distributed_certificate(cert, problem.graph,
                                           rounds=consensus_rounds)
    payload = cert.to_dict()
    payload["consensus"] = {"rounds": consensus_rounds,
                            "max_deviation": deviation}
    stored = json.loads((run_dir / "certificate.json").read_text())
    payload["matches_stored_bound"] = bool(np.allclose(
        np.array(payload["bound"]), np.array(stored["bound"]), atol=1e-9))
    (run_dir / "certificate_recomputed.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def regenerate_reports(run_dir) -> Path:
    """Re-emit the figure-data CSVs of a saved run from solution.json."""
    run_dir = Path(run_dir)
    cfg = ExperimentConfig.from_yaml(run_dir / "config.yaml")
    saved = json.loads((run_dir / "solution.json").read_text())
    problem = build_problem(cfg)
    xs = [np.array(v, dtype=float) for v in saved["x"]]
    write_reports(run_dir, problem, xs)
    return run_dir
