"""Tests for the linear-program layer."""

import numpy as np
import pytest

from cztube.lp import (
    FEAS_TOL,
    LinearProgram,
    LpStatus,
    check_feasibility,
    dump_lp,
    solve_lp,
)


def test_interval_endpoint():
    # minimize x on [-1, 1] -> x = -1
    prob = LinearProgram(c_obj=[1.0], lb=[-1.0], ub=[1.0])
    sol = solve_lp(prob)
    assert sol.status == LpStatus.OPTIMAL
    assert abs(sol.x_opt[0] + 1.0) <= 1e-9
    assert abs(sol.objective_value + 1.0) <= 1e-9


def test_contradictory_bounds_infeasible():
    prob = LinearProgram(c_obj=[0.0], lb=[1.0], ub=[-1.0])
    sol = solve_lp(prob)
    assert sol.status == LpStatus.INFEASIBLE


def test_simplex_facet_optimum():
    # minimize -x - y over the 2-simplex: optimum -1 anywhere on x + y = 1
    prob = LinearProgram(
        c_obj=[-1.0, -1.0],
        H=[[1.0, 1.0]],
        g=[1.0],
        lb=[0.0, 0.0],
        ub=[np.inf, np.inf],
    )
    sol = solve_lp(prob)
    assert sol.status == LpStatus.OPTIMAL
    assert abs(sol.objective_value + 1.0) <= 1e-9
    assert abs(sol.x_opt.sum() - 1.0) <= 1e-9


def test_unbounded():
    prob = LinearProgram(c_obj=[-1.0])
    sol = solve_lp(prob)
    assert sol.status == LpStatus.UNBOUNDED


def test_check_feasibility_box():
    prob = LinearProgram(c_obj=[0.0], lb=[0.0], ub=[1.0])
    sol = check_feasibility(prob)
    assert sol.status == LpStatus.OPTIMAL
    assert 0.0 - FEAS_TOL <= sol.x_opt[0] <= 1.0 + FEAS_TOL


def test_check_feasibility_fixed_value_conflict():
    prob = LinearProgram(c_obj=[0.0], E=[[1.0]], f=[2.0], lb=[-1.0], ub=[1.0])
    sol = check_feasibility(prob)
    assert sol.status == LpStatus.INFEASIBLE


def test_zero_variable_problems():
    assert solve_lp(LinearProgram(c_obj=[])).status == LpStatus.OPTIMAL
    bad = LinearProgram(c_obj=[], E=np.zeros((1, 0)), f=[1.0])
    assert solve_lp(bad).status == LpStatus.INFEASIBLE


def test_shape_validation():
    with pytest.raises(ValueError):
        LinearProgram(c_obj=[1.0, 2.0], E=[[1.0]], f=[0.0])
    with pytest.raises(ValueError):
        LinearProgram(c_obj=[1.0], H=[[1.0]], g=[0.0, 1.0])
    with pytest.raises(ValueError):
        LinearProgram(c_obj=[1.0], lb=[0.0, 0.0])


def test_determinism_repeated_solves():
    rng = np.random.default_rng(7)
    for _ in range(5):
        n = 8
        prob = LinearProgram(
            c_obj=rng.normal(size=n),
            H=rng.normal(size=(4, n)),
            g=rng.normal(size=4) + 4.0,
            lb=-np.ones(n),
            ub=np.ones(n),
        )
        a = solve_lp(prob)
        b = solve_lp(prob)
        assert a.status == b.status == LpStatus.OPTIMAL
        assert a.objective_value == b.objective_value
        assert np.array_equal(a.x_opt, b.x_opt)


def test_dual_certificate_on_random_lps():
    # weak duality: the returned multipliers must certify the objective
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = rng.integers(2, 12)
        m_eq = rng.integers(0, 3)
        m_ub = rng.integers(1, 6)
        x_feas = rng.uniform(-0.5, 0.5, size=n)
        E = rng.normal(size=(m_eq, n))
        H = rng.normal(size=(m_ub, n))
        prob = LinearProgram(
            c_obj=rng.normal(size=n),
            E=E,
            f=E @ x_feas,
            H=H,
            g=H @ x_feas + rng.uniform(0.1, 1.0, size=m_ub),
            lb=-np.ones(n),
            ub=np.ones(n),
        )
        sol = solve_lp(prob)
        assert sol.status == LpStatus.OPTIMAL
        y = sol.eq_duals if sol.eq_duals is not None else np.zeros(0)
        lam = sol.ineq_duals if sol.ineq_duals is not None else np.zeros(0)
        reduced = prob.c_obj - (E.T @ y if m_eq else 0.0) - H.T @ lam
        dual_obj = float(prob.f @ y) + float(prob.g @ lam)
        dual_obj += float(
            np.sum(np.where(reduced > 0, prob.lb * reduced, prob.ub * reduced))
        )
        assert np.all(lam <= 1e-8)
        assert abs(dual_obj - sol.objective_value) <= 1e-6 * (
            1.0 + abs(sol.objective_value)
        )


def test_constructed_infeasibility_detected():
    rng = np.random.default_rng(3)
    for _ in range(10):
        n = rng.integers(2, 10)
        prob = LinearProgram(
            c_obj=rng.normal(size=n),
            H=np.vstack([np.eye(n)[:1], -np.eye(n)[:1]]),
            g=[-50.0, -50.0],  # x_0 <= -50 and x_0 >= 50
            lb=-np.full(n, 100.0),
            ub=np.full(n, 100.0),
        )
        assert solve_lp(prob).status == LpStatus.INFEASIBLE


def test_dump_lp_roundtrips_values(tmp_path):
    prob = LinearProgram(
        c_obj=[1.0, -2.0],
        E=[[1.0, 1.0]],
        f=[0.125],
        H=[[0.5, 0.0]],
        g=[3.0],
        lb=[-1.0, -1.0],
        ub=[1.0, 1.0],
    )
    path = tmp_path / "prob.lp.txt"
    dump_lp(prob, path)
    text = path.read_text()
    assert "0.125" in text and "minimize" in text.lower()
