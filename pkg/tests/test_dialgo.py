"""Distributed rounds: conservation, multiplier structure, anytime
feasibility, and convergence of the relaxation toward the centralized
optimum."""

import numpy as np
import pytest

from mgridopt.dialgo import (AgentState, CommGraph, GraphError,
                             StepSizeSchedule, exchange_and_update,
                             finalize_mixed_integer, generate_graph,
                             init_allocations, local_multiplier_step, run)
from mgridopt.model import (ControllableLoadParams, GridParams, LocalBlock,
                            StorageParams, build_controllable_load_block,
                            build_grid_block, build_storage_block,
                            power_balance_rhs)
from mgridopt.solver import OPTIMAL, solve_lp
from mgridopt.stochastic import (ScenarioSet, assemble_two_stage,
                                 build_recourse_cost, lift_block)


def toy_agent(A, G=None, g=None, c=None, integrality=None, R=1, d=None,
              y=None, index=0):
    A = np.asarray(A, dtype=float)
    K, n = A.shape
    blk = LocalBlock(
        c=np.zeros(n) if c is None else np.asarray(c, float),
        G=np.zeros((0, n)) if G is None else np.asarray(G, float),
        g=np.zeros(0) if g is None else np.asarray(g, float),
        integrality=np.zeros(n, bool) if integrality is None else integrality,
        A=A, var_index={}, K=K)
    lifted = lift_block(blk, R)
    dim = lifted.eta_dim
    d = np.full(dim, 2.0) if d is None else np.asarray(d, float)
    y = np.zeros(dim) if y is None else np.asarray(y, float)
    return AgentState(index=index, lifted=lifted, d=d, y=y)


# --------------------------------------------------------------- graphs


def test_path_and_cycle_edges():
    assert generate_graph(4, "path").edges == [(0, 1), (1, 2), (2, 3)]
    assert generate_graph(4, "cycle").edges == [(0, 1), (0, 3), (1, 2), (2, 3)]
    assert generate_graph(2, "random").edges == [(0, 1)]
    assert generate_graph(1, "path").edges == []


def test_random_graph_connected_and_deterministic():
    g1 = generate_graph(20, "random", seed=3, p=0.2)
    g2 = generate_graph(20, "random", seed=3, p=0.2)
    assert g1.edges == g2.edges
    assert g1.is_connected()
    deg = g1.degree()
    assert deg.sum() == 2 * len(g1.edges)


def test_graph_validation():
    with pytest.raises(GraphError):
        CommGraph(3, [(0, 0)])
    with pytest.raises(GraphError):
        CommGraph(3, [(0, 1)])  # node 2 unreachable
    with pytest.raises(GraphError):
        CommGraph(2, [(0, 5)])


def test_metropolis_weights_doubly_stochastic():
    g = generate_graph(2, "path")
    W = g.metropolis_weights()
    assert W == pytest.approx(np.full((2, 2), 0.5))
    g11 = generate_graph(11, "random", seed=9, p=0.35)
    W = g11.metropolis_weights()
    assert W == pytest.approx(W.T)
    assert W.sum(axis=0) == pytest.approx(np.ones(11))
    assert np.all(W >= -1e-12)


# --------------------------------------------------------------- schedules


def test_schedules():
    dim = StepSizeSchedule.diminishing(2.0, 4.0)
    assert dim(0) == pytest.approx(0.5)
    assert dim(6) == pytest.approx(0.2)
    pw = StepSizeSchedule.piecewise(3.0, 0.5, 100)
    assert pw(0) == 3.0 and pw(99) == 3.0
    assert pw(100) == 1.5 and pw(250) == 0.75
    with pytest.raises(ValueError):
        StepSizeSchedule.diminishing(0.0, 1.0)
    with pytest.raises(ValueError):
        StepSizeSchedule.piecewise(3.0, 0.5, 0)


# --------------------------------------------------------------- allocations


def test_uniform_split_example():
    ys = init_allocations(np.array([4.0, 8.0]), 4)
    for y in ys:
        assert y == pytest.approx([1.0, 2.0])


def test_random_split_sums_exactly():
    h = np.array([3.7, -2.2, 0.0])
    for seed in range(5):
        ys = init_allocations(h, 6, mode="random", seed=seed)
        total = ys[0].copy()
        for y in ys[1:]:
            total = total + y
        assert np.max(np.abs(total - h)) <= 1e-12


def test_single_agent_gets_everything():
    h = np.array([1.5, 2.5])
    assert init_allocations(h, 1) == [pytest.approx(h)]


# --------------------------------------------------------------- exchange


def test_exchange_two_agents_hand_values():
    a = toy_agent([[1.0]], index=0, y=[1.0, 1.0])
    b = toy_agent([[1.0]], index=1, y=[2.0, 2.0])
    a.mu = np.array([1.0, 0.0])
    b.mu = np.array([0.0, 2.0])
    graph = generate_graph(2, "path")
    exchange_and_update([a, b], graph, 0.1)
    assert a.y == pytest.approx([1.1, 0.8])
    assert b.y == pytest.approx([1.9, 2.2])


def test_exchange_consensus_is_fixed_point():
    agents = [toy_agent([[1.0]], index=i, y=[float(i), -float(i)])
              for i in range(3)]
    for a in agents:
        a.mu = np.array([0.7, 0.3])
    before = [a.y.copy() for a in agents]
    exchange_and_update(agents, generate_graph(3, "cycle"), 0.5)
    for a, y0 in zip(agents, before):
        assert a.y == pytest.approx(y0)


def test_exchange_conserves_total_exactly():
    rng = np.random.default_rng(6)
    agents = [toy_agent([[1.0], [0.5]], R=2, index=i,
                        y=rng.normal(size=4)) for i in range(5)]
    total0 = sum(a.y for a in agents)
    graph = generate_graph(5, "random", seed=2, p=0.5)
    for t in range(50):
        for a in agents:
            a.mu = rng.normal(size=4)
        exchange_and_update(agents, graph, 0.3 / (t + 1))
    assert np.max(np.abs(sum(a.y for a in agents) - total0)) <= 1e-12


# --------------------------------------------------------------- local solves


def test_slack_allocation_gives_zero_multiplier():
    a = toy_agent([[1.0]], G=[[1.0], [-1.0]], g=[2.0, 0.0],
                  y=[100.0, 100.0])
    mu = local_multiplier_step(a, eta_cap=1e3)
    assert mu == pytest.approx([0.0, 0.0], abs=1e-9)


def test_one_dimensional_binding_multiplier():
    # min -z + 2 eta, z - eta1 <= 5 binding: mu = (1, 0)
    a = toy_agent([[1.0]], G=[[1.0], [-1.0]], g=[10.0, 0.0], c=[-1.0],
                  y=[5.0, 50.0])
    mu = local_multiplier_step(a, eta_cap=1e3)
    assert mu == pytest.approx([1.0, 0.0], abs=1e-9)
    assert a.z[0] == pytest.approx(5.0, abs=1e-8)


def test_multiplier_bounded_by_recourse_prices():
    rng = np.random.default_rng(13)
    for _ in range(25):
        n, K = 3, 2
        A = rng.normal(size=(K, n))
        G = np.vstack([np.eye(n), -np.eye(n)])
        g = np.concatenate([rng.uniform(0.5, 2.0, n), rng.uniform(0.5, 2.0, n)])
        d = rng.uniform(0.5, 3.0, size=2 * K)
        a = toy_agent(A, G=G, g=g, c=rng.normal(size=n), d=d,
                      y=rng.normal(size=2 * K))
        mu = local_multiplier_step(a, eta_cap=1e4)
        assert np.all(mu >= -1e-9)
        assert np.all(mu <= d + 1e-7)


def test_finalize_singleton_block():
    # X = {x = 1.5}: eta = max(0, Hx - y) componentwise at the optimum
    a = toy_agent([[2.0]], G=[[1.0], [-1.0]], g=[1.5, -1.5],
                  y=[1.0, -4.0])
    x, eta = finalize_mixed_integer(a, eta_cap=1e3)
    assert x[0] == pytest.approx(1.5, abs=1e-9)
    # H x = (3, -3); y = (1, -4) -> eta = (2, 1)
    assert eta == pytest.approx([2.0, 1.0], abs=1e-8)


def test_finalize_slack_allocation_zero_eta():
    a = toy_agent([[1.0]], G=[[1.0], [-1.0]], g=[2.0, 0.0], y=[50.0, 50.0])
    _, eta = finalize_mixed_integer(a, eta_cap=1e3)
    assert eta == pytest.approx([0.0, 0.0], abs=1e-9)


def test_finalize_matches_enumeration_two_binaries():
    rng = np.random.default_rng(21)
    for _ in range(10):
        A = rng.normal(size=(1, 2))
        c = rng.normal(size=2)
        G = np.vstack([np.eye(2), -np.eye(2)])
        g = np.array([1.0, 1.0, 0.0, 0.0])
        y = rng.normal(size=2)
        d = np.array([1.5, 2.5])
        a = toy_agent(A, G=G, g=g, c=c,
                      integrality=np.array([True, True]), d=d, y=y)
        x, eta = finalize_mixed_integer(a, eta_cap=1e3)
        best = np.inf
        H = a.lifted.H
        for x1 in (0.0, 1.0):
            for x2 in (0.0, 1.0):
                xx = np.array([x1, x2])
                ee = np.maximum(H @ xx - y, 0.0)
                best = min(best, c @ xx + d @ ee)
        got = c @ x + d @ eta
        assert got == pytest.approx(best, abs=1e-8)


# --------------------------------------------------------------- full runs


def two_agent_instance(K=2):
    grid = build_grid_block(
        GridParams(P_max=15.0, phi_p=(0.25,) * K, phi_s=(0.1,) * K), K)
    load = build_controllable_load_block(
        ControllableLoadParams(0.0, 0.5, (6.0,) * K, 0.9), K)
    blocks = [grid, load]
    b = power_balance_rhs([], [(6.0,) * K], [np.full(K, 1.0)])
    scen = ScenarioSet(pi=[1.0], b_r=[b])
    cost = build_recourse_cost(scen.pi, 3.0, 3.0, K)
    return blocks, scen, cost


def test_run_zero_rounds_is_feasible():
    blocks, scen, cost = two_agent_instance()
    res = run(blocks, scen, cost, generate_graph(2, "path"),
              StepSizeSchedule.diminishing(1.0, 1.0), T_f=0)
    assert res.trace.iters == [0]
    assert np.all(res.total_coupling() <= 1e-6)
    assert res.trace.alloc_residual_all[0] <= 1e-12


def test_run_converges_to_centralized_relaxation():
    # two curtailable loads sharing a renewable surplus; 200 diminishing
    # rounds land within 1% of the centralized relaxation optimum
    K = 2
    l1 = build_controllable_load_block(
        ControllableLoadParams(0.0, 0.8, (5.0, 7.0), 0.9), K)
    l2 = build_controllable_load_block(
        ControllableLoadParams(0.0, 0.7, (6.0, 4.0), 1.4), K)
    blocks = [l1, l2]
    b = power_balance_rhs([np.array([4.0, 5.0])], [(5.0, 7.0), (6.0, 4.0)], [])
    scen = ScenarioSet(pi=[1.0], b_r=[b])
    cost = build_recourse_cost(scen.pi, 3.0, 3.0, K)
    res = run(blocks, scen, cost, generate_graph(2, "path"),
              StepSizeSchedule.diminishing(2.0, 2.0), T_f=200,
              finalize_every=100)
    lp, _ = assemble_two_stage(blocks, scen, cost, relax=True)
    central = solve_lp(lp)
    assert central.status == OPTIMAL
    final_relax = res.trace.relax_cost_all[-1]
    assert abs(final_relax - central.value) <= 0.01 * abs(central.value)
    # the distributed value can only sit above the centralized optimum
    assert final_relax >= central.value - 1e-7


def test_run_anytime_feasibility_and_conservation():
    blocks, scen, cost = two_agent_instance()
    res = run(blocks, scen, cost, generate_graph(2, "path"),
              StepSizeSchedule.diminishing(2.0, 5.0), T_f=40,
              finalize_every=10, init_mode="random", init_seed=4)
    h = res.h
    for idx in range(len(res.trace.iters)):
        assert np.all(res.trace.coupling_vectors[idx] <= 1e-6)
    assert max(res.trace.alloc_residual_all) <= 1e-9
    # multipliers stay inside [0, d]
    for a in res.agents:
        assert np.all(a.mu >= -1e-9) and np.all(a.mu <= a.d + 1e-7)


def test_run_with_empty_block_agent():
    blocks, scen, cost = two_agent_instance()
    blocks = blocks + [LocalBlock.empty(scen.K)]
    res = run(blocks, scen, cost, generate_graph(3, "cycle"),
              StepSizeSchedule.diminishing(1.0, 5.0), T_f=10,
              finalize_every=5)
    assert np.all(res.total_coupling() <= 1e-6)
    assert max(res.trace.alloc_residual_all) <= 1e-9


def test_mismatched_graph_size_rejected():
    blocks, scen, cost = two_agent_instance()
    with pytest.raises(Exception, match="nodes"):
        run(blocks, scen, cost, generate_graph(3, "path"),
            StepSizeSchedule.diminishing(1.0, 1.0), T_f=1)
