"""Ternary search over the effective control-norm lower bound.

Each probe solves the rate-constrained problem at one ``rho_eff`` and is
classified as

* ``too_low``  - the terminal multiplier is nonzero yet more than
  ``n_x + 1`` vertices fall under ``rho_min``;
* ``eta_zero`` - the terminal multiplier vanishes;
* ``feasible`` - neither.

``too_low`` probes push the bracket up, ``eta_zero`` probes push it down,
and between them the optimal cost is compared as in a plain ternary
search. The bracket shrinks by 2/3 per iteration.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, Optional, Tuple

import numpy as np

from .certify import CertificationReport, certify, eta_n_zero
from .errors import SearchFailure, ValidationError
from .program import Solution, SolverSettings, Status, TrajectoryProblem, build_program, solve

log = logging.getLogger(__name__)


class Classification(str, Enum):
    TOO_LOW = "too_low"
    ETA_ZERO = "eta_zero"
    FEASIBLE = "feasible"
    FAILED = "failed"


# plot colours used for cost-versus-bound figures
COLORS = {
    Classification.TOO_LOW: "red",
    Classification.ETA_ZERO: "orange",
    Classification.FEASIBLE: "blue",
    Classification.FAILED: "gray",
}


@dataclass
class ProbeOutcome:
    rho_eff: float
    classification: Classification
    cost: float
    solution: Solution
    report: Optional[CertificationReport]
    solver_calls: int = 1

    @property
    def usable(self) -> bool:
        return self.classification is not Classification.FAILED

    def row(self) -> dict:
        return {
            "rho_eff": self.rho_eff,
            "classification": self.classification.value,
            "cost": self.cost,
            "color": COLORS[self.classification],
        }


@dataclass
class Iteration:
    rho_low: float
    rho_high: float
    rho_1: float
    rho_2: float
    classifications: Tuple[str, str]
    costs: Tuple[float, float]
    move: str


@dataclass
class SearchTrace:
    iterations: List[Iteration] = field(default_factory=list)
    solver_calls: int = 0
    final_rho: Optional[float] = None
    final_classification: Optional[str] = None
    bracket_estimates: Tuple[float, float] = (float("nan"), float("nan"))

    def to_dict(self) -> dict:
        return {
            "iterations": [it.__dict__ for it in self.iterations],
            "solver_calls": self.solver_calls,
            "final_rho": self.final_rho,
            "final_classification": self.final_classification,
            "bracket_estimates": {
                "rho_min_minus": self.bracket_estimates[0],
                "rho_min_plus": self.bracket_estimates[1],
            },
        }


def classify_probe(
    problem: TrajectoryProblem,
    solution: Solution,
    settings: Optional[SolverSettings] = None,
    tol: Optional[float] = None,
) -> ProbeOutcome:
    """Classify a solved probe; non-optimal solves come back as ``failed``."""
    settings = settings or SolverSettings()
    if solution.status is not Status.OPTIMAL:
        return ProbeOutcome(problem.rho_eff, Classification.FAILED, float("nan"), solution, None)
    scale = problem.cost.terminal_weight
    report = certify(
        solution,
        problem.rho_min,
        problem.rho_max,
        tol,
        disc=problem.disc,
        eps_eta=settings.eps_eta,
        eta_scale=scale,
    )
    n_x = problem.disc.n_x
    if eta_n_zero(solution, settings.eps_eta, scale):
        cls = Classification.ETA_ZERO
    elif report.n_below > n_x + 1:
        cls = Classification.TOO_LOW
    else:
        cls = Classification.FEASIBLE
    return ProbeOutcome(problem.rho_eff, cls, solution.cost, solution, report)


def probe(
    base: TrajectoryProblem,
    rho_eff: float,
    settings: Optional[SolverSettings] = None,
    tol: Optional[float] = None,
    rate: bool = True,
) -> ProbeOutcome:
    """Solve and classify at ``rho_eff``, retrying once with relaxed tolerances."""
    settings = settings or SolverSettings()
    problem = base.with_rho(rho_eff, rate=rate)
    program = build_program(problem)
    sol = solve(program, settings)
    calls = 1
    if sol.status is Status.NUMERICAL_FAILURE:
        log.info("retrying rho_eff=%.6f with relaxed tolerances", rho_eff)
        sol = solve(program, settings.relaxed())
        calls += 1
    out = classify_probe(problem, sol, settings, tol)
    out.solver_calls = calls
    return out


def _probe_pair(base, rhos, settings, tol, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            return list(pool.map(lambda r: probe(base, r, settings, tol), rhos))
    return [probe(base, r, settings, tol) for r in rhos]


def ternary_search(
    base: TrajectoryProblem,
    eps: float,
    settings: Optional[SolverSettings] = None,
    tol: Optional[float] = None,
    workers: int = 2,
) -> Tuple[Solution, SearchTrace]:
    """Search ``[rho_min, rho_max]`` for the best effective lower bound.

    Returns the solution at the midpoint of the final bracket together
    with the trace. The midpoint is classified and recorded in the trace
    but returned whatever its classification.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    settings = settings or SolverSettings()
    trace = SearchTrace()
    seen: List[ProbeOutcome] = []
    lo, hi = base.rho_min, base.rho_max
    while hi - lo > eps:
        third = (hi - lo) / 3
        r1, r2 = lo + third, hi - third
        p1, p2 = _probe_pair(base, (r1, r2), settings, tol, workers)
        trace.solver_calls += p1.solver_calls + p2.solver_calls
        seen += [p1, p2]
        if not (p1.usable and p2.usable):
            trace.bracket_estimates = estimate_bracket(seen, base.rho_min, base.rho_max)
            raise SearchFailure(
                f"solver failed at rho_eff in {{{r1:.6g}, {r2:.6g}}} after retry", trace
            )
        if p1.classification is Classification.TOO_LOW:
            lo, move = r1, "low<-rho_1 (too_low)"
        elif p2.classification is Classification.ETA_ZERO:
            hi, move = r2, "high<-rho_2 (eta_zero)"
        elif p1.cost > p2.cost:
            lo, move = r1, "low<-rho_1 (cost)"
        else:
            hi, move = r2, "high<-rho_2 (cost)"
        trace.iterations.append(
            Iteration(
                rho_low=lo,
                rho_high=hi,
                rho_1=r1,
                rho_2=r2,
                classifications=(p1.classification.value, p2.classification.value),
                costs=(p1.cost, p2.cost),
                move=move,
            )
        )
    mid = (lo + hi) / 2
    # the bracket may close onto rho_max itself; stay inside [rho_min, rho_max)
    mid = min(mid, np.nextafter(base.rho_max, -np.inf))
    final = probe(base, mid, settings, tol)
    trace.solver_calls += final.solver_calls
    seen.append(final)
    trace.final_rho = mid
    trace.final_classification = final.classification.value
    trace.bracket_estimates = estimate_bracket(seen, base.rho_min, base.rho_max)
    if not final.usable:
        raise SearchFailure(f"final solve at rho_eff={mid:.6g} failed", trace)
    return final.solution, trace


def estimate_bracket(
    outcomes: Iterable[ProbeOutcome], rho_min: float, rho_max: float
) -> Tuple[float, float]:
    """Empirical ``(rho^-, rho^+)`` from classified probes.

    ``rho^-`` is the largest ``too_low`` point seen (``rho_min`` if none),
    ``rho^+`` the smallest ``eta_zero`` point (``rho_max`` if none).
    """
    outcomes = list(outcomes)
    lows = [o.rho_eff for o in outcomes if o.classification is Classification.TOO_LOW]
    zeros = [o.rho_eff for o in outcomes if o.classification is Classification.ETA_ZERO]
    return (max(lows) if lows else rho_min, min(zeros) if zeros else rho_max)


def sweep(
    base: TrajectoryProblem,
    grid: Iterable[float],
    settings: Optional[SolverSettings] = None,
    tol: Optional[float] = None,
    workers: int = 1,
    rate: bool = True,
) -> List[ProbeOutcome]:
    """Classified probe at every grid value; failures are recorded, not raised."""
    grid = [float(r) for r in grid]
    for r in grid:
        if not base.rho_min <= r < base.rho_max:
            raise ValidationError(
                f"grid value {r} outside [{base.rho_min}, {base.rho_max})"
            )
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda r: probe(base, r, settings, tol, rate), grid))
    return [probe(base, r, settings, tol, rate) for r in grid]


def refine_boundary(
    base: TrajectoryProblem,
    lo: float,
    hi: float,
    is_left: Callable[[Classification], bool],
    settings: Optional[SolverSettings] = None,
    tol: Optional[float] = None,
    xtol: float = 1e-4,
) -> Tuple[float, int]:
    """Bisect for the point where ``is_left`` stops holding.

    ``is_left`` must hold at ``lo`` and fail at ``hi``. Returns the
    midpoint of the final interval and the number of solves used.
    """
    calls = 0
    while hi - lo > xtol:
        mid = (lo + hi) / 2
        out = probe(base, mid, settings, tol)
        calls += out.solver_calls
        if is_left(out.classification):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2, calls


def parse_grid(spec: str) -> List[float]:
    """``"start:stop:step"`` (stop excluded) or a comma-separated list."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid {spec!r} must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop <= start:
            raise ValidationError(f"grid {spec!r} is empty or has a non-positive step")
        n = int(np.floor((stop - start) / step + 1e-9))
        if start + n * step < stop - 1e-9 * step:
            n += 1
        return [round(start + k * step, 12) for k in range(n)]
    if not spec:
        return []
    return [float(v) for v in spec.split(",")]


@dataclass
class SearchResult:
    solution: Solution
    trace: SearchTrace
    report: CertificationReport
    problem: TrajectoryProblem
    q: np.ndarray
    seed: Optional[int]
    eps_a: float

    @property
    def within_bounds(self) -> bool:
        return self.report.within_bounds(self.problem.disc.n_x)

    def summary(self) -> dict:
        return {
            "final_rho": self.trace.final_rho,
            "final_classification": self.trace.final_classification,
            "solver_calls": self.trace.solver_calls,
            "cost": self.solution.cost,
            "seed": self.seed,
            "eps_a": self.eps_a,
            "q": self.q.tolist(),
            "n_vertex_violations": self.report.n_vertex_violations,
            "n_edge_violations": self.report.n_edge_violations,
            "within_bounds": self.within_bounds,
        }


def run_search(
    base: TrajectoryProblem,
    eps: float,
    eps_a: float = 1e-6,
    seed: Optional[int] = 0,
    perturb_dynamics: bool = True,
    settings: Optional[SolverSettings] = None,
    tol: Optional[float] = None,
    workers: int = 2,
    structure=None,
) -> SearchResult:
    """Perturb ``A``, search the lower bound and certify the returned solution.

    ``structure`` overrides the numerically computed Jordan structure of
    ``A`` when it is known in closed form.
    """
    from .spectra import eigen_structure, perturb, sample_q

    settings = settings or SolverSettings()
    problem = base
    q = np.zeros(0)
    if perturb_dynamics:
        structure = structure or eigen_structure(base.disc.a)
        spec = sample_q(structure.d, eps_a, seed)
        q = spec.q
        problem = base.with_a(perturb(structure, q))
    solution, trace = ternary_search(problem, eps, settings, tol, workers)
    final = problem.with_rho(trace.final_rho)
    report = certify(
        solution,
        problem.rho_min,
        problem.rho_max,
        tol,
        disc=final.disc,
        eps_eta=settings.eps_eta,
        eta_scale=problem.cost.terminal_weight,
    )
    return SearchResult(
        solution=solution,
        trace=trace,
        report=report,
        problem=final,
        q=q,
        seed=seed if perturb_dynamics else None,
        eps_a=eps_a if perturb_dynamics else 0.0,
    )
