import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pwlcvx.cli import main

CONFIG = str(Path(__file__).resolve().parents[1] / "configs" / "double_integrator.json")


def edited_config(tmp_path, **changes):
    data = json.loads(Path(CONFIG).read_text())
    for path, value in changes.items():
        section, key = path.split("__")
        data[section][key] = value
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return str(p)


def strip_time(path):
    data = json.loads(Path(path).read_text())
    data.pop("generated_at", None)
    return data


def test_discretize(tmp_path):
    assert main(["discretize", "--config", CONFIG, "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "discretization.json").read_text())
    b0 = np.array(d["b0"])
    assert b0[0, 0] == pytest.approx(0.25**2 / 3, abs=1e-12)
    assert np.array(d["zoh"]["b"])[0, 0] == pytest.approx(0.25**2 / 2, abs=1e-12)
    assert d["controllable"] is True


def test_malformed_json_writes_nothing(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out"
    assert main(["discretize", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()


def test_schema_errors(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = edited_config(tmp_path, bounds__rho_min=7.0)
    assert main(["search", "--config", cfg, "--out", str(out)]) == 2
    assert "rho_min" in capsys.readouterr().err
    assert not out.exists()
    cfg = edited_config(tmp_path, grid__n_segments=0)
    assert main(["discretize", "--config", cfg, "--out", str(out)]) == 2
    cfg = edited_config(tmp_path, cost__unknown_key=1)
    assert main(["discretize", "--config", cfg, "--out", str(out)]) == 2
    assert main(["search", "--config", CONFIG, "--out", str(out), "--eps", "-1"]) == 2
    assert main(["discretize", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["discretize", "--config", CONFIG, "--out", str(blocker / "sub")]) == 3


def test_search_end_to_end(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["search", "--config", CONFIG, "--out", str(out), "--seed", "0"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["controls.csv", "report.json", "trace.json", "trajectory.csv"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["summary"]["final_rho"] == pytest.approx(4.098, abs=0.05)
    assert rep["summary"]["seed"] == 0
    assert rep["summary"]["within_bounds"] is True
    assert "converged" in capsys.readouterr().out


def test_search_report_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["search", "--config", CONFIG, "--out", str(out), "--seed", "4"]) == 0
    assert strip_time(a / "report.json") == strip_time(b / "report.json")
    assert (a / "trace.json").read_bytes() == (b / "trace.json").read_bytes()
    assert (a / "controls.csv").read_bytes() == (b / "controls.csv").read_bytes()


def test_flag_precedence(tmp_path):
    cfg = edited_config(tmp_path, settings__seed=9)
    out = tmp_path / "f"
    assert main(["search", "--config", cfg, "--out", str(out), "--eps", "0.1"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["summary"]["seed"] == 9 and rep["config"]["settings"]["eps"] == 0.1
    assert main(["search", "--config", cfg, "--out", str(out), "--eps", "0.1", "--seed", "2"]) == 0
    assert json.loads((out / "report.json").read_text())["summary"]["seed"] == 2
    assert main(["search", "--config", cfg, "--out", str(out), "--eps", "0.1", "--no-perturb"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["summary"]["q"] == [] and rep["summary"]["seed"] is None


def test_wide_eps_single_solve(tmp_path):
    out = tmp_path / "w"
    assert main(["search", "--config", CONFIG, "--out", str(out), "--eps", "10"]) == 0
    assert json.loads((out / "trace.json").read_text())["solver_calls"] == 1


def test_sweep(tmp_path):
    assert main(["sweep", "--config", CONFIG, "--grid", "4:6:0.1", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["rho_eff", "classification", "cost"] and len(rows) == 21
    assert json.loads((tmp_path / "sweep.json").read_text())["points"][0]["classification"] == "too_low"
    assert main(["sweep", "--config", CONFIG, "--grid", "3:6:0.5", "--out", str(tmp_path)]) == 2
    assert main(["sweep", "--config", CONFIG, "--grid", "4:6", "--out", str(tmp_path)]) == 2


def test_solve(tmp_path):
    assert main(["solve", "--config", CONFIG, "--out", str(tmp_path / "f")]) == 0
    assert main(["solve", "--config", CONFIG, "--out", str(tmp_path / "z"), "--zoh"]) == 0
    with open(tmp_path / "z" / "controls.csv") as fh:
        assert len(list(csv.reader(fh))) == 17
    sol = json.loads((tmp_path / "f" / "solution.json").read_text())
    assert sol["status"] == "optimal" and len(sol["u"]) == 17


def test_solve_infeasible_exits_4(tmp_path):
    cfg = edited_config(tmp_path, bounds__rho_max=4.01, terminal__g_matrix=[[1, 0, 0, 0, 0, 0]],
                        terminal__g_offset=[-1000.0])
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


def test_certify(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"u": [[5.0, 0.0, 0.0]] * 17}))
    assert main(["certify", "--config", CONFIG, "--solution", str(good), "--out", str(tmp_path / "r")]) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["certification"]["n_vertex_violations"] == 0
    assert rep["certification"]["n_edge_violations"] == 0

    # alternating signs: every edge passes through the origin
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"u": [[5.0 * (-1) ** i, 0.0, 0.0] for i in range(17)]}))
    assert main(["certify", "--config", CONFIG, "--solution", str(bad)]) == 5
    assert main(["certify", "--config", CONFIG, "--solution", str(tmp_path / "none.json")]) == 3
    junk = tmp_path / "junk.json"
    junk.write_text("[1, 2")
    assert main(["certify", "--config", CONFIG, "--solution", str(junk)]) == 2
    assert main(["certify", "--config", CONFIG, "--solution", str(good.parent / "good.json"), "--tol-viol", "-1"]) == 2


def test_bench_command(tmp_path, capsys):
    assert main(["bench", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 13 and "[FAIL]" not in out
    assert json.loads((tmp_path / "report.json").read_text())["passed"] is True
    assert (tmp_path / "zoh_comparison.json").exists()


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "pwlcvx", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("discretize", "solve", "search", "sweep", "certify", "bench"):
        assert cmd in res.stdout
