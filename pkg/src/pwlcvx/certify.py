"""Checks that a relaxed solution honours the annular control bound.

A vertex is fine when ``rho_min <= ||u_i|| <= rho_max``. Under
piecewise-linear interpolation an edge is fine when the whole segment
between two vertex controls stays in the annulus; its extreme norms have
closed forms (perpendicular foot for the minimum, endpoints for the
maximum), so no sampling is involved.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .discretization import DiscreteSystem
from .errors import ValidationError
from .program import Solution, Status, TrajectoryProblem


def delta_bound(rho_eff: float, rho_min: float) -> float:
    """Largest control jump that keeps an edge above ``rho_min``.

    Both endpoints of the edge must have norm at least ``rho_eff``.
    """
    if rho_eff < rho_min:
        raise ValidationError(f"rho_eff={rho_eff} is below rho_min={rho_min}")
    return 2.0 * math.sqrt(rho_eff**2 - rho_min**2)


def edge_min_norm(u_a, u_b) -> float:
    """``min_{t in [0, 1]} ||(1 - t) u_a + t u_b||``."""
    u_a = np.asarray(u_a, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    if u_a.shape != u_b.shape:
        raise ValidationError("edge endpoints must have the same dimension")
    g = u_b - u_a
    gg = float(g @ g)
    if gg == 0.0:
        return float(np.linalg.norm(u_a))
    t = -float(u_a @ g) / gg
    if 0.0 <= t <= 1.0:
        return float(np.linalg.norm(u_a + t * g))
    return float(min(np.linalg.norm(u_a), np.linalg.norm(u_b)))


def edge_max_norm(u_a, u_b) -> float:
    """Norm is convex along the segment, so the maximum sits at an endpoint."""
    return float(max(np.linalg.norm(u_a), np.linalg.norm(u_b)))


@dataclass
class VertexViolation:
    index: int
    norm: float
    kind: str


@dataclass
class EdgeViolation:
    start: int
    end: int
    min_norm: float
    max_norm: float
    kind: str


@dataclass
class CertificationReport:
    rho_min: float
    rho_max: float
    tolerance: float
    vertex_violations: List[VertexViolation] = field(default_factory=list)
    edge_violations: List[EdgeViolation] = field(default_factory=list)
    edge_min_norms: List[float] = field(default_factory=list)
    edge_max_norms: List[float] = field(default_factory=list)
    eta_n_norm: Optional[float] = None
    eta_n_zero: Optional[bool] = None
    vertex_condition_failures: List[int] = field(default_factory=list)
    dual_recursion_residual: Optional[float] = None

    @property
    def n_vertex_violations(self) -> int:
        return len(self.vertex_violations)

    @property
    def n_edge_violations(self) -> int:
        return len(self.edge_violations)

    @property
    def n_below(self) -> int:
        """Vertices under ``rho_min``, the count used when classifying probes."""
        return sum(1 for v in self.vertex_violations if v.kind == "below")

    def within_bounds(self, n_x: int) -> bool:
        """At most ``n_x + 1`` bad vertices and ``2 n_x + 2`` bad edges."""
        return self.n_vertex_violations <= n_x + 1 and self.n_edge_violations <= 2 * n_x + 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_vertex_violations"] = self.n_vertex_violations
        d["n_edge_violations"] = self.n_edge_violations
        return d


def _kind(lo: float, hi: float, rho_min: float, rho_max: float, tol: float) -> Optional[str]:
    below = lo < rho_min - tol
    above = hi > rho_max + tol
    if below and above:
        return "both"
    if below:
        return "below"
    if above:
        return "above"
    return None


def eta_n_zero(solution: Solution, eps_eta: float = 1e-5, scale: float = 1.0) -> bool:
    """True when the last dynamics multiplier vanishes to ``eps_eta * max(1, scale)``.

    ``scale`` is the terminal-cost weight, which sets the magnitude of the
    multipliers when they do not vanish.
    """
    if solution.eta.size == 0:
        return True
    return float(np.max(np.abs(solution.eta[-1]))) <= eps_eta * max(1.0, scale)


def vertex_condition(
    solution: Solution, disc: DiscreteSystem, index: int, threshold: float = 1e-5
) -> bool:
    """Dual sufficient condition for the bound to hold at vertex ``index``.

    Uses ``B0' eta_0`` at the first vertex, ``B1' eta_{N-1}`` at the last
    and ``(B0 + A B1)' eta_i`` in between (0-based). The vector must beat
    ``threshold * (1 + ||eta||_inf)`` in the infinity norm.
    """
    if disc.hold != "foh":
        raise ValidationError("vertex condition is defined for first-order hold")
    n = disc.n_segments
    if not 0 <= index <= n:
        raise ValidationError(f"vertex index {index} outside 0..{n}")
    eta = solution.eta
    if eta.shape != (n, disc.n_x):
        raise ValidationError("solution carries no dynamics multipliers")
    if index == 0:
        vec = disc.b0.T @ eta[0]
    elif index == n:
        vec = disc.b1.T @ eta[n - 1]
    else:
        vec = disc.b_eff.T @ eta[index]
    scale = 1.0 + float(np.max(np.abs(eta))) if eta.size else 1.0
    return float(np.max(np.abs(vec))) > threshold * scale


def dual_recursion_residual(solution: Solution, a: np.ndarray) -> float:
    """``max_i ||eta_{i-1} - A' eta_i||`` over consecutive multipliers."""
    eta = solution.eta
    if eta.shape[0] < 2:
        return 0.0
    diff = eta[:-1] - eta[1:] @ a
    return float(np.max(np.linalg.norm(diff, axis=1)))


def terminal_dual_residual(solution: Solution, problem: TrajectoryProblem) -> Optional[float]:
    """``||eta_{N-1} - grad m(x_N) - G' mu2||``; None at the kink of the terminal norm."""
    cost = problem.cost
    x_n = solution.x[-1]
    grad = np.zeros_like(x_n)
    if cost.terminal_weight > 0:
        r = x_n - cost.terminal_target
        nr = np.linalg.norm(r)
        if nr < 1e-9:
            return None
        grad = cost.terminal_weight * r / nr
    if problem.n_g:
        grad = grad + problem.g_matrix.T @ solution.mu2
    return float(np.linalg.norm(solution.eta[-1] - grad))


def certify(
    solution: Solution,
    rho_min: float,
    rho_max: float,
    tol: Optional[float] = None,
    *,
    disc: Optional[DiscreteSystem] = None,
    eps_eta: float = 1e-5,
    eta_scale: float = 1.0,
    vertex_threshold: float = 1e-5,
) -> CertificationReport:
    """Vertex and edge violations of ``rho_min <= ||u|| <= rho_max``.

    ``tol`` defaults to ``1e-4 * rho_max``. With ``disc`` the dual
    diagnostics (vertex conditions, multiplier recursion) are filled in
    as well; they are informative and never change the violation lists.
    """
    if solution.status is not Status.OPTIMAL:
        raise ValidationError(f"cannot certify a solution with status {solution.status.value}")
    if tol is None:
        tol = 1e-4 * rho_max
    u = np.atleast_2d(solution.u)
    norms = np.linalg.norm(u, axis=1)
    report = CertificationReport(rho_min=rho_min, rho_max=rho_max, tolerance=tol)

    for i, nrm in enumerate(norms):
        kind = _kind(nrm, nrm, rho_min, rho_max, tol)
        if kind is not None:
            report.vertex_violations.append(VertexViolation(i, float(nrm), kind))

    if solution.hold == "zoh":
        # constant control along each edge
        edges = [(i, i + 1, float(n), float(n)) for i, n in enumerate(norms)]
    else:
        edges = [
            (i, i + 1, edge_min_norm(u[i], u[i + 1]), edge_max_norm(u[i], u[i + 1]))
            for i in range(len(u) - 1)
        ]
    for start, end, lo, hi in edges:
        report.edge_min_norms.append(lo)
        report.edge_max_norms.append(hi)
        kind = _kind(lo, hi, rho_min, rho_max, tol)
        if kind is not None:
            report.edge_violations.append(EdgeViolation(start, end, lo, hi, kind))

    if solution.eta.size:
        report.eta_n_norm = float(np.max(np.abs(solution.eta[-1])))
        report.eta_n_zero = eta_n_zero(solution, eps_eta, eta_scale)
    if disc is not None and disc.hold == "foh" and solution.eta.shape == (disc.n_segments, disc.n_x):
        report.vertex_condition_failures = [
            i
            for i in range(disc.n_segments + 1)
            if not vertex_condition(solution, disc, i, vertex_threshold)
        ]
        report.dual_recursion_residual = dual_recursion_residual(solution, disc.a)
    return report
