import csv
import json

import numpy as np
import pytest

from pwlcvx.bench import compare_zoh, double_integrator_problem, max_control_jump


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_problem_definition():
    p = double_integrator_problem()
    assert (p.rho_min, p.rho_max) == (4.0, 6.0)
    np.testing.assert_array_equal(p.x_init, [0, 0, 0, 0, 0, 10])
    assert p.disc.n_segments * p.disc.dt == pytest.approx(4.0)
    assert (p.disc.n_x, p.disc.n_u) == (6, 3)
    assert p.n_g == 0
    assert p.cost.terminal_weight == 100.0


def test_max_control_jump():
    assert max_control_jump([[0, 0], [3, 4], [3, 5]]) == pytest.approx(5.0)


def test_reproduce_benchmark_passes(bench_run):
    out, report = bench_run
    failed = [t.line() for t in report.targets if not t.passed]
    assert not failed, failed
    assert len(report.targets) == 13
    assert all(t.source for t in report.targets)
    data = json.loads((out / "report.json").read_text())
    assert data["passed"] is True
    for key in ("delta_at_4_5", "max_control_jump_unconstrained", "rho_minus_est",
                "rho_plus_est", "converged_rho", "solver_calls", "violation_counts"):
        assert key in data["values"]


def test_reproduce_benchmark_files(bench_run):
    out, report = bench_run
    traj = read_csv(out / "trajectory.csv")
    assert traj[0] == ["t", "x0", "x1", "x2", "x3", "x4", "x5"] and len(traj) == 18
    ctrl = read_csv(out / "controls.csv")
    assert ctrl[0] == ["t", "u0", "u1", "u2", "norm", "edge_min_norm"] and len(ctrl) == 18
    assert ctrl[-1][-1] == ""
    norms = np.array([float(r[4]) for r in ctrl[1:]])
    edges = np.array([float(r[5]) for r in ctrl[1:-1]])
    assert np.all(edges <= np.minimum(norms[:-1], norms[1:]) + 1e-12)
    assert np.all(edges >= 4 - 6e-4)
    sweep = read_csv(out / "sweep.csv")
    assert sweep[0] == ["rho_eff", "classification", "cost"] and len(sweep) == 81
    trace = json.loads((out / "trace.json").read_text())
    assert trace["solver_calls"] == report.values["solver_calls"]


def test_rate_bound_redundant_above_4_5(bench_run):
    _, report = bench_run
    red = report.values["rate_redundancy"]
    assert sorted(red) == ["4.50", "4.75", "5.00", "5.25", "5.50", "5.75"]
    assert all(v["delta"] > v["max_jump"] for v in red.values())


def test_rollout_defect_small(bench_run):
    _, report = bench_run
    assert report.values["rollout_terminal_defect"] <= 1e-3


def test_compare_zoh(tmp_path):
    res = compare_zoh(tmp_path)
    assert res.zoh_controls == 16 and res.foh_controls == 17
    # terminal cost is 100 * distance and cannot exceed the total cost
    assert res.zoh_terminal_distance <= res.zoh_cost / 100
    assert res.foh_terminal_distance <= res.foh_cost / 100
    assert len(read_csv(tmp_path / "zoh_controls.csv")) == 17
    assert len(read_csv(tmp_path / "foh_single_controls.csv")) == 18
    assert (tmp_path / "zoh_trajectory.csv").exists()
