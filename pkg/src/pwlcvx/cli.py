"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 solver failure,
5 certification failure. Flags override config fields, which override
built-in defaults.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pydantic

from . import export
from .certify import certify
from .discretization import check_controllability, discretize_zoh
from .config import ProblemConfig
from .errors import IllConditionedError, SearchFailure, ValidationError
from .program import Solution, solve_problem

log = logging.getLogger("pwlcvx")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_CERTIFY = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _load_config(args) -> ProblemConfig:
    """Read the config file and fold in command-line overrides."""
    if args.config is None:
        raise CliError("--config is required", EXIT_CONFIG)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config {args.config}: {exc}", EXIT_CONFIG) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {args.config}: {exc}", EXIT_CONFIG) from exc
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object", EXIT_CONFIG)

    overrides = {
        "eps": getattr(args, "eps", None),
        "eps_a": getattr(args, "eps_a", None),
        "seed": getattr(args, "seed", None),
        "feas_tol": getattr(args, "tol_feas", None),
        "gap_tol": getattr(args, "tol_feas", None),
        "viol_tol": getattr(args, "tol_viol", None),
    }
    if getattr(args, "no_perturb", False):
        overrides["perturb"] = False
    settings = dict(raw.get("settings") or {})
    settings.update({k: v for k, v in overrides.items() if v is not None})
    raw = {**raw, "settings": settings}
    try:
        return ProblemConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        raise CliError(f"invalid config {args.config}:\n{exc}", EXIT_CONFIG) from exc


def _build(cfg: ProblemConfig, hold: str = "foh"):
    try:
        return cfg.problem(hold)
    except (ValidationError, ValueError) as exc:
        raise CliError(f"invalid problem: {exc}", EXIT_CONFIG) from exc


def _out_dir(path) -> Path:
    if path is None:
        raise CliError("--out is required", EXIT_CONFIG)
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc}", EXIT_IO) from exc
    return out


def _emit(fn, *args):
    try:
        return fn(*args)
    except OSError as exc:
        raise CliError(f"write failed: {exc}", EXIT_IO) from exc


def cmd_discretize(args) -> int:
    cfg = _load_config(args)
    problem = _build(cfg)
    disc = problem.disc
    a_z, b_z = discretize_zoh(cfg.continuous(), cfg.grid.t_f, cfg.grid.n_segments)
    rank, controllable = check_controllability(disc)
    out = _out_dir(args.out)
    data = {
        "dt": disc.dt,
        "n_segments": disc.n_segments,
        "a": disc.a,
        "b0": disc.b0,
        "b1": disc.b1,
        "zoh": {"a": a_z, "b": b_z},
        "controllability_rank": rank,
        "controllable": controllable,
    }
    _emit(export.write_json, out / "discretization.json", data)
    print(f"wrote {out / 'discretization.json'}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    hold = "zoh" if args.zoh else "foh"
    base = _build(cfg, hold)
    rho = cfg.bounds.rho_eff if cfg.bounds.rho_eff is not None else cfg.bounds.rho_min
    problem = base.with_rho(rho, rate=cfg.settings.rate and hold == "foh")
    out = _out_dir(args.out)
    sol = solve_problem(problem, cfg.solver_settings())
    if not sol.ok:
        _emit(export.write_json, out / "solution.json", sol.to_dict())
        raise CliError(f"solver returned {sol.status.value}", EXIT_SOLVER)
    report = certify(
        sol,
        problem.rho_min,
        problem.rho_max,
        cfg.settings.viol_tol,
        disc=problem.disc,
        eps_eta=cfg.settings.eps_eta,
        eta_scale=problem.cost.terminal_weight,
    )
    _emit(export.write_json, out / "solution.json", sol.to_dict())
    _emit(export.write_trajectory, out / "trajectory.csv", sol, problem.disc)
    _emit(export.write_controls, out / "controls.csv", sol, problem.disc)
    _emit(
        export.write_json,
        out / "report.json",
        {
            "generated_at": _timestamp(),
            "hold": hold,
            "rho_eff": rho,
            "cost": sol.cost,
            "certification": report.to_dict(),
        },
    )
    print(f"{hold} solve at rho_eff={rho:.6g}: cost {sol.cost:.6g}, "
          f"{report.n_vertex_violations} vertex / {report.n_edge_violations} edge violations")
    return EXIT_OK


def cmd_search(args) -> int:
    from .search import run_search

    cfg = _load_config(args)
    s = cfg.settings
    base = _build(cfg)
    out = _out_dir(args.out)
    try:
        result = run_search(
            base,
            s.eps,
            eps_a=s.eps_a,
            seed=s.seed,
            perturb_dynamics=s.perturb,
            settings=cfg.solver_settings(),
            tol=s.viol_tol,
        )
    except SearchFailure as exc:
        if exc.trace is not None:
            _emit(export.write_json, out / "trace.json", exc.trace.to_dict())
        raise CliError(str(exc), EXIT_SOLVER) from exc
    except IllConditionedError as exc:
        raise CliError(f"cannot perturb dynamics: {exc}", EXIT_SOLVER) from exc

    _emit(export.write_trajectory, out / "trajectory.csv", result.solution, result.problem.disc)
    _emit(export.write_controls, out / "controls.csv", result.solution, result.problem.disc)
    _emit(export.write_json, out / "trace.json", result.trace.to_dict())
    _emit(
        export.write_json,
        out / "report.json",
        {
            "generated_at": _timestamp(),
            "summary": result.summary(),
            "certification": result.report.to_dict(),
            "config": cfg.model_dump(),
        },
    )
    print(
        f"converged rho_eff={result.trace.final_rho:.6f} "
        f"({result.trace.final_classification}) after {result.trace.solver_calls} solves; "
        f"{result.report.n_vertex_violations} vertex / {result.report.n_edge_violations} edge violations"
    )
    if not result.within_bounds:
        raise CliError("certification bounds exceeded", EXIT_CERTIFY)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .search import parse_grid, sweep

    cfg = _load_config(args)
    spec = args.grid or f"{cfg.bounds.rho_min}:{cfg.bounds.rho_max}:0.1"
    try:
        grid = parse_grid(spec)
    except (ValidationError, ValueError) as exc:
        raise CliError(f"bad --grid: {exc}", EXIT_CONFIG) from exc
    base = _build(cfg)
    try:
        outcomes = sweep(base, grid, cfg.solver_settings(), cfg.settings.viol_tol, rate=cfg.settings.rate)
    except ValidationError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    out = _out_dir(args.out)
    _emit(export.write_sweep, out / "sweep.csv", outcomes)
    _emit(
        export.write_json,
        out / "sweep.json",
        {"generated_at": _timestamp(), "grid": grid, "points": [o.row() for o in outcomes]},
    )
    print(f"{len(outcomes)} sweep points written to {out / 'sweep.csv'}")
    if not all(o.usable for o in outcomes):
        raise CliError("solver failed at one or more sweep points", EXIT_SOLVER)
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    if args.solution is None:
        raise CliError("--solution is required", EXIT_CONFIG)
    try:
        data = export.read_json(args.solution)
    except OSError as exc:
        raise CliError(f"cannot read solution {args.solution}: {exc}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {args.solution}: {exc}", EXIT_CONFIG) from exc
    try:
        sol = Solution.from_dict(data)
        report = certify(sol, cfg.bounds.rho_min, cfg.bounds.rho_max, cfg.settings.viol_tol)
    except (ValidationError, ValueError, TypeError) as exc:
        raise CliError(f"invalid solution: {exc}", EXIT_CONFIG) from exc
    n_x = len(cfg.x_init)
    payload = {
        "generated_at": _timestamp(),
        "within_bounds": report.within_bounds(n_x),
        "certification": report.to_dict(),
    }
    if args.out:
        out = _out_dir(args.out)
        _emit(export.write_json, out / "report.json", payload)
    print(f"{report.n_vertex_violations} vertex / {report.n_edge_violations} edge violations")
    if not report.within_bounds(n_x):
        raise CliError("certification bounds exceeded", EXIT_CERTIFY)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import compare_zoh, reproduce_benchmark

    out = _out_dir(args.out)
    kwargs = {}
    for name in ("eps", "eps_a", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    try:
        report = reproduce_benchmark(out, **kwargs)
        zoh = compare_zoh(out)
    except OSError as exc:
        raise CliError(f"write failed: {exc}", EXIT_IO) from exc
    _emit(export.write_json, out / "zoh_comparison.json", zoh.to_dict())
    for t in report.targets:
        print(t.line())
    if not report.passed:
        raise CliError("one or more benchmark targets failed", EXIT_CERTIFY)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwlcvx",
        description="Annular control-norm trajectory optimization with piecewise-linear controls.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="problem config (JSON)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--tol-feas", type=float, help="solver feasibility and gap tolerance")
        p.add_argument("--tol-viol", type=float, help="norm-violation tolerance for certification")

    def search_flags(p):
        p.add_argument("--eps", type=float, help="search termination width")
        p.add_argument("--eps-a", type=float, help="eigenvalue perturbation magnitude")
        p.add_argument("--seed", type=int, help="seed for the perturbation draw")

    p = sub.add_parser("discretize", help="write A, B0, B1 and the ZOH pair")
    common(p)
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("solve", help="single convexified solve at bounds.rho_eff")
    common(p)
    p.add_argument("--zoh", action="store_true", help="piecewise-constant controls")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("search", help="perturb, search the lower bound and certify")
    common(p)
    search_flags(p)
    p.add_argument("--no-perturb", action="store_true", help="skip the eigenvalue perturbation")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("sweep", help="classify probes over a grid of lower bounds")
    common(p)
    p.add_argument("--grid", help="start:stop:step or comma list")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("certify", help="check a solution file against the annulus")
    common(p, out_required=False)
    p.add_argument("--solution", help="solution JSON with at least a 'u' array")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bench", help="reproduce the double-integrator benchmark")
    p.add_argument("--out", required=True, help="output directory")
    search_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
