import json

import cvxpy as cp
import numpy as np
import pytest

from conftest import scalar_chain
from pwlcvx.certify import dual_recursion_residual, terminal_dual_residual
from pwlcvx.errors import ValidationError
from pwlcvx.program import (
    SolverSettings,
    Solution,
    Status,
    assumption_diagnostics,
    build_program,
    evaluate_cost,
    quadrature_weights,
    solve,
    solve_problem,
)


def cvxpy_oracle(problem):
    """Same relaxed problem written independently in cvxpy."""
    d = problem.disc
    n = d.n_segments
    x = cp.Variable((n + 1, d.n_x))
    u = cp.Variable((n + 1, d.n_u))
    s = cp.Variable(n + 1)
    w = problem.cost.quadrature_weights
    cons = [x[0] == problem.x_init, s >= problem.rho_eff, s <= problem.rho_max]
    for i in range(n):
        cons.append(x[i + 1] == d.a @ x[i] + d.b0 @ u[i] + d.b1 @ u[i + 1])
    for i in range(n + 1):
        cons.append(cp.norm(u[i]) <= s[i])
    if problem.rate_bound is not None:
        for i in range(n):
            cons.append(cp.norm(u[i + 1] - u[i]) <= problem.rate_bound)
    obj = w @ cp.square(s) + problem.cost.terminal_weight * cp.norm(x[n] - problem.cost.terminal_target)
    val = cp.Problem(cp.Minimize(obj), cons).solve(solver=cp.CVXOPT)
    return val


def test_bench_counts(bench_problem):
    prog = build_program(bench_problem.with_rho(4.5))
    assert prog.n_primary == 17 * (6 + 3 + 1) == 170
    assert prog.n_dynamics_rows == 16 * 6
    assert prog.n_norm_cones == 17
    assert prog.n_rate_cones == 16
    assert build_program(bench_problem.with_rho(4.5, rate=False)).n_rate_cones == 0


def test_scalar_chain_hand_optimum():
    prob = scalar_chain()
    prog = build_program(prob)
    # one dynamics row, one initial-state row, one terminal row
    assert prog.n_dynamics_rows == 1 and prog.n_equality_rows == 3
    sol = solve(prog)
    assert sol.status is Status.OPTIMAL
    np.testing.assert_allclose(sol.u.ravel(), [1.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(sol.sigma, [1.0, 1.0], atol=1e-6)
    assert sol.cost == pytest.approx(1.0, abs=1e-7)
    # stationarity by hand: 2 w u_i + eta / 2 = 0 and -eta + mu2 = 0
    assert sol.eta[0, 0] == pytest.approx(-2.0, abs=1e-6)
    assert sol.mu2[0] == pytest.approx(-2.0, abs=1e-6)
    assert terminal_dual_residual(sol, prob) == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("rho", [4.098, 4.5, 5.5])
def test_against_cvxpy(bench_problem, rho):
    prob = bench_problem.with_rho(rho)
    sol = solve_problem(prob)
    assert sol.ok
    assert sol.cost == pytest.approx(cvxpy_oracle(prob), rel=1e-5)


def test_converged_bound_within_annulus(bench_problem):
    sol = solve_problem(bench_problem.with_rho(4.098))
    assert sol.status is Status.OPTIMAL
    tol = 1e-4 * 6
    assert np.all(sol.u_norms >= 4 - tol) and np.all(sol.u_norms <= 6 + tol)


def test_rho_eff_above_rho_max(bench_problem):
    with pytest.raises(ValidationError):
        bench_problem.with_rho(6.5)
    with pytest.raises(ValidationError):
        bench_problem.with_rho(3.0)


def test_quadrature_rules(bench_problem):
    d = bench_problem.disc
    np.testing.assert_allclose(quadrature_weights(d, "uniform"), np.full(17, 0.25))
    t = quadrature_weights(d, "trapezoid")
    assert t[0] == t[-1] == 0.125 and t.sum() == pytest.approx(4.0)
    with pytest.raises(ValidationError):
        quadrature_weights(d, "simpson")


@pytest.fixture(scope="module")
def grid_solves(bench_problem, settings):
    out = []
    for rho in np.arange(4.0, 6.0, 0.1):
        p = bench_problem.with_rho(rho)
        out.append((p, solve_problem(p, settings)))
    return out


def test_dual_recursion(grid_solves, settings):
    for p, sol in grid_solves:
        assert sol.ok
        scale = 1 + np.max(np.abs(sol.eta))
        assert dual_recursion_residual(sol, p.disc.a) <= 10 * settings.gap_tol * scale


def test_terminal_dual_identity(grid_solves, settings):
    # the residual is set by the duality gap, about sqrt(gap_tol), see ledger
    for p, sol in grid_solves:
        r = terminal_dual_residual(sol, p)
        if r is not None:
            assert r <= 10 * np.sqrt(settings.gap_tol) * max(1.0, p.cost.terminal_weight)


def test_vanishing_multiplier_pins_sigma(grid_solves, settings):
    from pwlcvx.certify import eta_n_zero

    seen = 0
    for p, sol in grid_solves:
        if eta_n_zero(sol, settings.eps_eta, p.cost.terminal_weight):
            seen += 1
            # sigma is pinned only as tightly as the duality gap allows
            slope = 2 * np.min(p.cost.quadrature_weights) * p.rho_eff
            bound = 10 * settings.gap_tol * max(1.0, abs(sol.cost)) / slope
            assert np.max(np.abs(sol.sigma - p.rho_eff)) <= bound
    assert seen >= 5


def test_objective_consistency(grid_solves, settings):
    for p, sol in grid_solves:
        assert abs(evaluate_cost(p, sol.x, sol.sigma) - sol.cost) <= 10 * settings.gap_tol


def test_cost_nondecreasing_without_rate_bound(bench_problem, settings):
    costs = [solve_problem(bench_problem.with_rho(r, rate=False), settings).cost for r in np.arange(4.0, 6.0, 0.1)]
    assert np.all(np.diff(costs) >= -10 * settings.gap_tol * max(costs))


def test_assumptions_on_bench(bench_problem):
    rep = assumption_diagnostics(bench_problem.with_rho(4.5))
    assert rep.equality_full_rank and rep.equality_rank == rep.equality_rows
    assert rep.controllable and rep.controllability_rank == 6
    assert rep.slater_ok and rep.slater_margin > 0
    assert rep.slater_status == "strictly_feasible"
    assert rep.terminal_optimality == "not machine-checkable"


def test_assumptions_flag_duplicate_terminal_rows():
    prob = scalar_chain()
    from dataclasses import replace

    dup = replace(prob, g_matrix=np.array([[1.0], [1.0]]), g_offset=np.array([-1.0, -1.0]))
    rep = assumption_diagnostics(dup)
    assert not rep.equality_full_rank
    assert rep.equality_rank == rep.equality_rows - 1


def test_assumptions_flag_missing_strict_feasibility():
    # reaching x=1 needs |u| >= 1 somewhere, which rho_max = 0.8 forbids
    rep = assumption_diagnostics(scalar_chain(rho_eff=0.5, rho_max=0.8))
    assert not rep.slater_ok
    assert rep.slater_status == "infeasible"
    assert solve_problem(scalar_chain(rho_eff=0.5, rho_max=0.8)).status is Status.INFEASIBLE


def test_solution_round_trip_and_dump(bench_problem, tmp_path):
    settings = SolverSettings(dump_dir=str(tmp_path))
    sol = solve_problem(bench_problem.with_rho(4.5), settings)
    back = Solution.from_dict(json.loads(json.dumps(sol.to_dict())))
    np.testing.assert_array_equal(back.u, sol.u)
    np.testing.assert_array_equal(back.eta, sol.eta)
    assert back.status is Status.OPTIMAL
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["program_rho_4.500000.json", "solution_rho_4.500000.json"]
    with pytest.raises(ValidationError):
        Solution.from_dict({"x": []})
