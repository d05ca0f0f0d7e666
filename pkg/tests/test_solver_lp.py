"""LP engine checks: hand-worked KKT examples, strong duality on random
instances, vertex structure, subgradient property, determinism."""

import numpy as np
import pytest

from mgridopt.solver import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram,
                             Tolerances, solve_lp, split_singleton_rows)


def box_lp(c, G, g, lo, hi):
    return LinearProgram(np.asarray(c, float), np.asarray(G, float),
                         np.asarray(g, float), np.asarray(lo, float),
                         np.asarray(hi, float))


def dual_objective(lp, sol):
    """Assemble the dual value from row duals and reduced costs.

    Bound multipliers come from the sign split of the reduced costs, so
    equality with the primal value genuinely certifies the duals.
    """
    r = sol.reduced_costs
    nu_lo = np.maximum(r, 0.0)
    nu_hi = np.maximum(-r, 0.0)
    val = -lp.g @ sol.duals
    finite_lo = np.isfinite(lp.lo)
    finite_hi = np.isfinite(lp.hi)
    val += lp.lo[finite_lo] @ nu_lo[finite_lo]
    val -= lp.hi[finite_hi] @ nu_hi[finite_hi]
    return val


def random_bounded_lp(rng, n=None, m=None):
    n = n or rng.integers(1, 9)
    m = m or rng.integers(1, 13)
    G = rng.normal(size=(m, n))
    x_feas = rng.normal(size=n)
    lo = x_feas - rng.uniform(0.1, 3.0, size=n)
    hi = x_feas + rng.uniform(0.1, 3.0, size=n)
    # keep x_feas feasible so the instance cannot be empty
    g = G @ x_feas + rng.uniform(0.0, 2.0, size=m)
    g[rng.random(m) < 0.4] += -rng.uniform(0.0, 1.9)  # let some rows bind
    g = np.maximum(g, G @ x_feas)
    c = rng.normal(size=n)
    return box_lp(c, G, g, lo, hi)


# ---------------------------------------------------------------- examples


def test_binding_row_dual_is_one():
    # min -x s.t. x <= 1, 0 <= x <= 2: optimum at the row, dual 1
    lp = box_lp([-1.0], [[1.0]], [1.0], [0.0], [2.0])
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(1.0, abs=1e-9)
    assert sol.value == pytest.approx(-1.0, abs=1e-9)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-9)


def test_zero_objective_gives_zero_duals():
    lp = box_lp([0.0], [[1.0]], [1.0], [0.0], [5.0])
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value == 0.0
    assert sol.duals[0] == pytest.approx(0.0, abs=1e-9)


def test_infeasible_detected():
    # x <= -1 with x >= 0
    lp = box_lp([1.0], [[1.0]], [-1.0], [0.0], [10.0])
    sol = solve_lp(lp)
    assert sol.status == INFEASIBLE


def test_unbounded_detected():
    lp = box_lp([-1.0], np.zeros((1, 1)), [1.0], [0.0], [np.inf])
    sol = solve_lp(lp)
    assert sol.status == UNBOUNDED


def test_equality_via_paired_rows():
    # x + y = 2 as two inequalities, min x with y <= 1.5
    G = [[1.0, 1.0], [-1.0, -1.0], [0.0, 1.0]]
    g = [2.0, -2.0, 1.5]
    lp = box_lp([1.0, 0.0], G, g, [0.0, 0.0], [5.0, 5.0])
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.x == pytest.approx([0.5, 1.5], abs=1e-9)


def test_free_variable_supported():
    # min x with x free below, row x >= -3 written as -x <= 3
    lp = box_lp([1.0], [[-1.0]], [3.0], [-np.inf], [np.inf])
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(-3.0, abs=1e-9)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-9)


def test_zero_variable_problem():
    lp = LinearProgram(np.zeros(0), np.zeros((2, 0)), np.array([1.0, 0.0]),
                       np.zeros(0), np.zeros(0))
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value == 0.0
    lp_bad = LinearProgram(np.zeros(0), np.zeros((1, 0)), np.array([-1.0]),
                           np.zeros(0), np.zeros(0))
    assert solve_lp(lp_bad).status == INFEASIBLE


# ---------------------------------------------------------------- properties


def test_strong_duality_on_200_random_lps():
    rng = np.random.default_rng(20240817)
    solved = 0
    while solved < 200:
        lp = random_bounded_lp(rng)
        sol = solve_lp(lp)
        assert sol.status == OPTIMAL, "feasible-by-construction instance"
        gap = abs(sol.value - dual_objective(lp, sol))
        assert gap <= 1e-7 * (1.0 + abs(sol.value))
        assert np.all(sol.duals >= -1e-9)
        # complementary slackness on rows
        slack = lp.g - lp.G @ sol.x
        assert np.all(np.abs(sol.duals * slack) <= 1e-6)
        solved += 1


def test_vertex_active_set_has_full_rank():
    rng = np.random.default_rng(7)
    for _ in range(60):
        lp = random_bounded_lp(rng)
        sol = solve_lp(lp)
        rows = [lp.G[i] for i in range(lp.m)
                if abs(lp.g[i] - lp.G[i] @ sol.x) <= 1e-7]
        for j in range(lp.n):
            e = np.zeros(lp.n)
            e[j] = 1.0
            if abs(sol.x[j] - lp.lo[j]) <= 1e-9 or abs(sol.x[j] - lp.hi[j]) <= 1e-9:
                rows.append(e)
        A = np.array(rows)
        assert np.linalg.matrix_rank(A, tol=1e-8) == lp.n


def test_matches_scipy_reference():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(99)
    for _ in range(120):
        lp = random_bounded_lp(rng)
        sol = solve_lp(lp)
        ref = scipy_opt.linprog(lp.c, A_ub=lp.G, b_ub=lp.g,
                                bounds=list(zip(lp.lo, lp.hi)),
                                method="highs")
        assert ref.status == 0 and sol.status == OPTIMAL
        assert sol.value == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)


def test_beale_cycling_example_terminates():
    # classic degenerate instance that cycles under naive most-negative
    # pricing; the degeneracy counter must hand over to Bland's rule
    c = [-0.75, 150.0, -0.02, 6.0]
    G = [[0.25, -60.0, -1.0 / 25.0, 9.0],
         [0.5, -90.0, -1.0 / 50.0, 3.0],
         [0.0, 0.0, 1.0, 0.0]]
    g = [0.0, 0.0, 1.0]
    lp = box_lp(c, G, g, [0.0] * 4, [np.inf] * 4)
    sol = solve_lp(lp)
    assert sol.status == OPTIMAL
    assert sol.value == pytest.approx(-0.05, abs=1e-9)


def test_degenerate_duplicated_rows():
    rng = np.random.default_rng(44)
    for _ in range(30):
        lp0 = random_bounded_lp(rng, n=5, m=6)
        G = np.vstack([lp0.G] * 4)  # heavy degeneracy via duplication
        g = np.concatenate([lp0.g] * 4)
        lp = box_lp(lp0.c, G, g, lp0.lo, lp0.hi)
        a = solve_lp(lp0)
        b = solve_lp(lp)
        assert b.status == OPTIMAL
        assert b.value == pytest.approx(a.value, abs=1e-7)


def test_larger_instances_match_scipy():
    scipy_opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(321)
    for _ in range(25):
        n = int(rng.integers(40, 80))
        m = int(rng.integers(60, 140))
        lp = random_bounded_lp(rng, n=n, m=m)
        sol = solve_lp(lp)
        ref = scipy_opt.linprog(lp.c, A_ub=lp.G, b_ub=lp.g,
                                bounds=list(zip(lp.lo, lp.hi)),
                                method="highs")
        assert sol.status == OPTIMAL and ref.status == 0
        assert sol.value == pytest.approx(ref.fun, abs=1e-6, rel=1e-7)


def test_determinism_bitwise():
    rng = np.random.default_rng(5)
    lp = random_bounded_lp(rng, n=6, m=10)
    a = solve_lp(lp)
    b = solve_lp(lp)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.duals.tobytes() == b.duals.tobytes()
    assert a.value == b.value and a.pivots == b.pivots


def test_subgradient_of_subproblem_value():
    # p(y) = min c'x s.t. A x <= y over a box; -mu must support p at y
    rng = np.random.default_rng(11)
    for _ in range(40):
        n = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        A = rng.normal(size=(k, n))
        c = rng.normal(size=n)
        lo = -np.ones(n)
        hi = np.ones(n)
        y = A @ rng.uniform(-0.5, 0.5, size=n) + rng.uniform(0, 0.5, size=k)

        def p(yv):
            s = solve_lp(box_lp(c, A, yv, lo, hi))
            assert s.status == OPTIMAL
            return s.value, s.duals

        base, mu = p(y)
        eps = 1e-5
        for j in range(k):
            e = np.zeros(k)
            e[j] = eps
            up, _ = p(y + e)
            dn, _ = p(y - e)
            # subgradient inequality p(y + d) >= p(y) - mu'd
            assert up >= base - mu[j] * eps - 1e-7
            assert dn >= base + mu[j] * eps - 1e-7
            # and the finite-difference slope brackets -mu
            assert (up - dn) / (2 * eps) == pytest.approx(-mu[j], abs=1e-4)


def test_hand_kkt_subproblem():
    # 1-D: min -x, x <= y, 0 <= x <= 10, y = 5 -> p(y) = -y, mu = 1
    sol = solve_lp(box_lp([-1.0], [[1.0]], [5.0], [0.0], [10.0]))
    assert sol.value == pytest.approx(-5.0, abs=1e-9)
    assert sol.duals[0] == pytest.approx(1.0, abs=1e-9)


def test_lp_value_subgradient_operation():
    from mgridopt.solver import lp_value_subgradient
    # zero objective -> zero multiplier
    mu, sol = lp_value_subgradient(
        np.zeros(1), np.zeros((0, 1)), np.zeros(0), np.array([0.0]),
        np.array([2.0]), np.array([[1.0]]), np.array([5.0]))
    assert sol.status == OPTIMAL and mu == pytest.approx([0.0])
    # hand KKT case through the named operation
    mu, sol = lp_value_subgradient(
        np.array([-1.0]), np.zeros((0, 1)), np.zeros(0), np.array([0.0]),
        np.array([10.0]), np.array([[1.0]]), np.array([5.0]))
    assert sol.value == pytest.approx(-5.0) and mu == pytest.approx([1.0])
    # finite-difference cross-check on a random block
    rng = np.random.default_rng(2)
    for _ in range(10):
        n, k, m = 3, 2, 4
        G = rng.normal(size=(m, n))
        x0 = rng.uniform(-0.4, 0.4, size=n)
        g = G @ x0 + rng.uniform(0.1, 1.0, size=m)
        A = rng.normal(size=(k, n))
        y = A @ x0 + rng.uniform(0.0, 0.5, size=k)
        c = rng.normal(size=n)
        lo, hi = -np.ones(n), np.ones(n)
        mu, sol = lp_value_subgradient(c, G, g, lo, hi, A, y)
        assert sol.status == OPTIMAL
        eps = 1e-5
        for j in range(k):
            e = np.zeros(k)
            e[j] = eps
            up, up_sol = lp_value_subgradient(c, G, g, lo, hi, A, y + e)
            assert up_sol.value >= sol.value - mu[j] * eps - 1e-7
    # infeasible subproblem reported, no multiplier
    mu, sol = lp_value_subgradient(
        np.zeros(1), np.zeros((0, 1)), np.zeros(0), np.array([0.0]),
        np.array([1.0]), np.array([[1.0]]), np.array([-5.0]))
    assert mu is None and sol.status == INFEASIBLE


def test_lp_format_dump(tmp_path):
    from mgridopt.solver import write_lp_format
    lp = LinearProgram(np.array([-1.0, 2.0]), np.array([[1.0, 1.0]]),
                       np.array([1.5]), np.array([0.0, 0.0]),
                       np.array([1.0, np.inf]),
                       integrality=np.array([True, False]))
    text = write_lp_format(lp, tmp_path / "p.lp", names=["on", "flow"])
    assert (tmp_path / "p.lp").read_text() == text
    assert "Minimize" in text and "Subject To" in text and "End" in text
    assert "- 1 on" in text and "+ 2 flow" in text
    assert "r0: " in text and "<= 1.5" in text
    assert "Binaries" in text and "\n on" in text
    assert "0 <= flow <= +inf" in text


def test_split_singleton_rows_preserves_feasible_set():
    rng = np.random.default_rng(3)
    G = np.array([[1.0, 0.0], [0.0, -2.0], [1.0, 1.0]])
    g = np.array([2.0, 4.0, 2.5])
    lo = np.array([-5.0, -5.0])
    hi = np.array([5.0, 5.0])
    G2, g2, lo2, hi2 = split_singleton_rows(G, g, lo, hi)
    assert G2.shape == (1, 2)
    assert hi2[0] == 2.0 and lo2[1] == -2.0
    for _ in range(200):
        x = rng.uniform(-5, 5, size=2)
        inside_old = np.all(G @ x <= g) and np.all(x >= lo) and np.all(x <= hi)
        inside_new = (np.all(G2 @ x <= g2) and np.all(x >= lo2)
                      and np.all(x <= hi2))
        assert inside_old == inside_new
