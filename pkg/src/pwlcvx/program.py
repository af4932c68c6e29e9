"""Convexified trajectory problems as second-order cone programs.

The relaxed problem over vertices ``i = 0..N``::

    min   w_T ||x_N - x_ref|| + sum_i w_i l(sigma_i)
    s.t.  x_{i+1} = A x_i + B0 u_i + B1 u_{i+1}
          ||u_i|| <= sigma_i,   rho_eff <= sigma_i <= rho_max
          ||u_{i+1} - u_i|| <= delta            (optional rate bound)
          x_0 = x_init,  G x_N + g = 0

is assembled directly in the standard form consumed by Clarabel,
``min 1/2 z'Pz + q'z  s.t.  Az + s = b, s in K``. Equality rows are written
as ``-x_{i+1} + A x_i + B0 u_i + B1 u_{i+1} = 0`` so that their
multipliers are the dynamics duals ``eta_i`` of the Lagrangian
``f + sum eta_i'(-x_{i+1} + ...) + mu1'(x_0 - x_init) + mu2'(G x_N + g)``
without any sign flip.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional

import clarabel
import numpy as np
import scipy.sparse as sp

from .discretization import DiscreteSystem, check_controllability
from .errors import ValidationError

log = logging.getLogger(__name__)


class RunningCost(str, Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


def quadrature_weights(disc: DiscreteSystem, rule: str = "trapezoid") -> np.ndarray:
    """Per-vertex weights ``w_i`` turning ``int l(sigma) dt`` into a sum.

    ``"trapezoid"`` halves the two end weights, ``"uniform"`` gives every
    vertex ``dt``. Zero-order hold always uses ``dt`` per control.
    """
    n = disc.n_controls
    w = np.full(n, disc.dt)
    if disc.hold == "foh":
        if rule == "trapezoid":
            w[0] = w[-1] = disc.dt / 2
        elif rule != "uniform":
            raise ValidationError(f"unknown quadrature rule {rule!r}")
    return w


@dataclass(frozen=True)
class CostSpec:
    """``terminal_weight * ||x_N - terminal_target|| + sum_i w_i l(sigma_i)``."""

    terminal_weight: float
    terminal_target: np.ndarray
    quadrature_weights: np.ndarray
    running_kind: RunningCost = RunningCost.QUADRATIC

    def __post_init__(self):
        w = np.asarray(self.quadrature_weights, dtype=float).reshape(-1)
        target = np.asarray(self.terminal_target, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("quadrature weights must be finite and nonnegative")
        tw = float(self.terminal_weight)
        if not np.isfinite(tw) or tw < 0:
            raise ValidationError("terminal_weight must be finite and nonnegative")
        if not np.all(np.isfinite(target)):
            raise ValidationError("terminal_target has non-finite entries")
        if tw == 0 and not np.any(w > 0):
            raise ValidationError("cost has neither a terminal nor a running term")
        object.__setattr__(self, "quadrature_weights", w)
        object.__setattr__(self, "terminal_target", target)
        object.__setattr__(self, "terminal_weight", tw)
        object.__setattr__(self, "running_kind", RunningCost(self.running_kind))

    def running(self, sigma: np.ndarray) -> np.ndarray:
        sigma = np.asarray(sigma, dtype=float)
        return sigma if self.running_kind is RunningCost.LINEAR else sigma**2


@dataclass(frozen=True)
class TrajectoryProblem:
    """A discretized, convexified problem at one effective lower bound.

    ``rho_eff`` defaults to ``rho_min``. ``rate_bound`` is the bound on
    ``||u_{i+1} - u_i||``; :meth:`with_rho` sets it from the lower bounds.
    ``g_matrix``/``g_offset`` define the affine terminal map ``G x + g``;
    both may have zero rows.
    """

    disc: DiscreteSystem
    cost: CostSpec
    rho_min: float
    rho_max: float
    x_init: np.ndarray
    rho_eff: Optional[float] = None
    rate_bound: Optional[float] = None
    g_matrix: Optional[np.ndarray] = None
    g_offset: Optional[np.ndarray] = None

    def __post_init__(self):
        n_x = self.disc.n_x
        rho_min, rho_max = float(self.rho_min), float(self.rho_max)
        rho_eff = rho_min if self.rho_eff is None else float(self.rho_eff)
        if not (np.isfinite(rho_min) and np.isfinite(rho_max) and np.isfinite(rho_eff)):
            raise ValidationError("norm bounds must be finite")
        if rho_min <= 0:
            raise ValidationError("rho_min must be positive")
        if not rho_min < rho_max:
            raise ValidationError(f"need rho_min < rho_max, got {rho_min} >= {rho_max}")
        if not rho_min <= rho_eff < rho_max:
            raise ValidationError(
                f"rho_eff={rho_eff} must lie in [rho_min, rho_max) = [{rho_min}, {rho_max})"
            )
        x_init = np.asarray(self.x_init, dtype=float).reshape(-1)
        if x_init.shape != (n_x,) or not np.all(np.isfinite(x_init)):
            raise ValidationError(f"x_init must be a finite vector of length {n_x}")
        if self.cost.terminal_target.shape != (n_x,):
            raise ValidationError(f"terminal_target must have length {n_x}")
        if self.cost.quadrature_weights.shape != (self.disc.n_controls,):
            raise ValidationError(
                f"expected {self.disc.n_controls} quadrature weights, "
                f"got {self.cost.quadrature_weights.shape[0]}"
            )
        g = np.zeros((0, n_x)) if self.g_matrix is None else np.array(self.g_matrix, dtype=float)
        if g.size == 0:
            g = g.reshape(0, n_x)
        off = np.zeros(g.shape[0]) if self.g_offset is None else np.array(self.g_offset, dtype=float)
        off = off.reshape(-1)
        if g.ndim != 2 or g.shape[1] != n_x or off.shape != (g.shape[0],):
            raise ValidationError("terminal map must be (n_G x n_x) with an offset of length n_G")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(off))):
            raise ValidationError("terminal map has non-finite entries")
        if self.rate_bound is not None:
            if self.disc.hold != "foh":
                raise ValidationError("rate bound requires first-order hold")
            if not np.isfinite(self.rate_bound) or self.rate_bound < 0:
                raise ValidationError("rate_bound must be finite and nonnegative")
            object.__setattr__(self, "rate_bound", float(self.rate_bound))
        object.__setattr__(self, "rho_min", rho_min)
        object.__setattr__(self, "rho_max", rho_max)
        object.__setattr__(self, "rho_eff", rho_eff)
        object.__setattr__(self, "x_init", x_init)
        object.__setattr__(self, "g_matrix", g)
        object.__setattr__(self, "g_offset", off)

    @property
    def n_g(self) -> int:
        return self.g_matrix.shape[0]

    def with_rho(self, rho_eff: float, rate: bool = True) -> "TrajectoryProblem":
        """Copy at lower bound ``rho_eff``, with the matching rate bound if ``rate``."""
        from .certify import delta_bound

        if not np.isfinite(rho_eff) or not self.rho_min <= rho_eff < self.rho_max:
            raise ValidationError(
                f"rho_eff={rho_eff} must lie in [{self.rho_min}, {self.rho_max})"
            )
        bound = delta_bound(rho_eff, self.rho_min) if rate else None
        return replace(self, rho_eff=float(rho_eff), rate_bound=bound)

    def with_a(self, a) -> "TrajectoryProblem":
        return replace(self, disc=self.disc.with_a(a))


@dataclass
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    eps_eta: float = 1e-5
    verbose: bool = False
    dump_dir: Optional[str] = None

    def relaxed(self, factor: float = 100.0) -> "SolverSettings":
        return replace(self, feas_tol=self.feas_tol * factor, gap_tol=self.gap_tol * factor)


@dataclass
class ConicProgram:
    """Standard-form cone program plus the bookkeeping to read results back."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: List[tuple]
    x_idx: np.ndarray
    u_idx: np.ndarray
    sigma_idx: np.ndarray
    tau_idx: Optional[int]
    rows: Dict[str, np.ndarray]
    problem: TrajectoryProblem
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_primary(self) -> int:
        return self.x_idx.size + self.u_idx.size + self.sigma_idx.size

    @property
    def n_norm_cones(self) -> int:
        return self.metadata["n_norm_cones"]

    @property
    def n_rate_cones(self) -> int:
        return self.metadata["n_rate_cones"]

    @property
    def n_dynamics_rows(self) -> int:
        return self.rows["dynamics"].size

    @property
    def n_equality_rows(self) -> int:
        return sum(dim for kind, dim in self.cones if kind == "zero")

    def clarabel_cones(self):
        out = []
        for kind, dim in self.cones:
            if kind == "zero":
                out.append(clarabel.ZeroConeT(dim))
            elif kind == "nonneg":
                out.append(clarabel.NonnegativeConeT(dim))
            else:
                out.append(clarabel.SecondOrderConeT(dim))
        return out

    def to_dict(self) -> dict:
        a = self.A.tocoo()
        p = self.P.tocoo()
        return {
            "shape": list(self.A.shape),
            "A": {"row": a.row.tolist(), "col": a.col.tolist(), "val": a.data.tolist()},
            "b": self.b.tolist(),
            "P": {"row": p.row.tolist(), "col": p.col.tolist(), "val": p.data.tolist()},
            "q": self.q.tolist(),
            "cones": [list(c) for c in self.cones],
            "metadata": self.metadata,
        }


class _Rows:
    """Accumulates sparse constraint rows in COO triplets."""

    def __init__(self):
        self.r: List[int] = []
        self.c: List[int] = []
        self.v: List[float] = []
        self.b: List[float] = []
        self.cones: List[tuple] = []

    @property
    def n(self) -> int:
        return len(self.b)

    def add_block(self, row0: int, cols, mat):
        mat = np.atleast_2d(mat)
        nz_r, nz_c = np.nonzero(mat)
        cols = np.asarray(cols)
        self.r.extend((row0 + nz_r).tolist())
        self.c.extend(cols[nz_c].tolist())
        self.v.extend(mat[nz_r, nz_c].tolist())

    def new_rows(self, rhs) -> int:
        row0 = self.n
        self.b.extend(np.atleast_1d(np.asarray(rhs, dtype=float)).tolist())
        return row0


def build_program(problem: TrajectoryProblem) -> ConicProgram:
    """Assemble the cone program for ``problem``.

    Variables are laid out as ``x`` (row-major per vertex), ``u``, ``sigma``
    and, when the terminal weight is positive, one epigraph scalar ``tau``
    for ``||x_N - x_ref|| <= tau``. A quadratic running cost is placed in
    the objective's ``P`` block rather than a rotated cone.
    """
    disc, cost = problem.disc, problem.cost
    n_x, n_u, N = disc.n_x, disc.n_u, disc.n_segments
    n_c = disc.n_controls

    x_idx = np.arange((N + 1) * n_x).reshape(N + 1, n_x)
    off = x_idx.size
    u_idx = off + np.arange(n_c * n_u).reshape(n_c, n_u)
    off += u_idx.size
    sigma_idx = off + np.arange(n_c)
    off += n_c
    tau_idx = None
    if cost.terminal_weight > 0:
        tau_idx = off
        off += 1
    n_vars = off

    rows = _Rows()
    eye_x = np.eye(n_x)
    eye_u = np.eye(n_u)

    # equality block
    dyn = np.empty((N, n_x), dtype=int)
    for i in range(N):
        r0 = rows.new_rows(np.zeros(n_x))
        dyn[i] = r0 + np.arange(n_x)
        rows.add_block(r0, x_idx[i + 1], -eye_x)
        rows.add_block(r0, x_idx[i], disc.a)
        rows.add_block(r0, u_idx[i], disc.b0)
        if disc.hold == "foh":
            rows.add_block(r0, u_idx[i + 1], disc.b1)
    r0 = rows.new_rows(problem.x_init)
    init = r0 + np.arange(n_x)
    rows.add_block(r0, x_idx[0], eye_x)
    r0 = rows.new_rows(-problem.g_offset)
    term = r0 + np.arange(problem.n_g)
    if problem.n_g:
        rows.add_block(r0, x_idx[N], problem.g_matrix)
    n_eq = rows.n
    rows.cones.append(("zero", n_eq))

    # sigma box
    r0 = rows.new_rows(np.full(n_c, -problem.rho_eff))
    lower = r0 + np.arange(n_c)
    rows.add_block(r0, sigma_idx, -np.eye(n_c))
    r0 = rows.new_rows(np.full(n_c, problem.rho_max))
    upper = r0 + np.arange(n_c)
    rows.add_block(r0, sigma_idx, np.eye(n_c))
    rows.cones.append(("nonneg", 2 * n_c))

    # ||u_i|| <= sigma_i
    for i in range(n_c):
        r0 = rows.new_rows(np.zeros(n_u + 1))
        rows.add_block(r0, [sigma_idx[i]], [[-1.0]])
        rows.add_block(r0 + 1, u_idx[i], -eye_u)
        rows.cones.append(("soc", n_u + 1))

    if tau_idx is not None:
        r0 = rows.new_rows(np.concatenate([[0.0], -cost.terminal_target]))
        rows.add_block(r0, [tau_idx], [[-1.0]])
        rows.add_block(r0 + 1, x_idx[N], -eye_x)
        rows.cones.append(("soc", n_x + 1))

    n_rate = 0
    if problem.rate_bound is not None:
        for i in range(N):
            r0 = rows.new_rows(np.concatenate([[problem.rate_bound], np.zeros(n_u)]))
            rows.add_block(r0 + 1, u_idx[i + 1], -eye_u)
            rows.add_block(r0 + 1, u_idx[i], eye_u)
            rows.cones.append(("soc", n_u + 1))
            n_rate += 1

    A = sp.csc_matrix((rows.v, (rows.r, rows.c)), shape=(rows.n, n_vars))
    b = np.asarray(rows.b)

    q = np.zeros(n_vars)
    w = cost.quadrature_weights
    if cost.running_kind is RunningCost.LINEAR:
        q[sigma_idx] = w
        P = sp.csc_matrix((n_vars, n_vars))
        encoding = "linear_objective"
    else:
        P = sp.csc_matrix((2.0 * w, (sigma_idx, sigma_idx)), shape=(n_vars, n_vars))
        encoding = "quadratic_objective"
    if tau_idx is not None:
        q[tau_idx] = cost.terminal_weight

    return ConicProgram(
        P=P,
        q=q,
        A=A,
        b=b,
        cones=rows.cones,
        x_idx=x_idx,
        u_idx=u_idx,
        sigma_idx=sigma_idx,
        tau_idx=tau_idx,
        rows={
            "dynamics": dyn,
            "initial": init,
            "terminal": term,
            "sigma_lower": lower,
            "sigma_upper": upper,
        },
        problem=problem,
        metadata={
            "hold": disc.hold,
            "running_cost_encoding": encoding,
            "n_norm_cones": n_c,
            "n_rate_cones": n_rate,
            "terminal_epigraph": tau_idx is not None,
            "rho_eff": problem.rho_eff,
            "rate_bound": problem.rate_bound,
        },
    )


@dataclass
class Solution:
    """Primal-dual result of one solve; vertex arrays are indexed from 0."""

    x: np.ndarray
    u: np.ndarray
    sigma: np.ndarray
    eta: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    cost: float
    status: Status
    hold: str = "foh"
    rho_eff: Optional[float] = None
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def u_norms(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=1)

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "hold": self.hold,
            "rho_eff": self.rho_eff,
            "cost": self.cost,
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "sigma": self.sigma.tolist(),
            "eta": self.eta.tolist(),
            "mu1": self.mu1.tolist(),
            "mu2": self.mu2.tolist(),
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Solution":
        """Rebuild a solution; only ``u`` is required, missing duals become empty."""
        if "u" not in data:
            raise ValidationError("solution file needs a 'u' array")
        u = np.atleast_2d(np.asarray(data["u"], dtype=float))
        if not np.all(np.isfinite(u)):
            raise ValidationError("solution 'u' has non-finite entries")
        x = np.asarray(data["x"], dtype=float) if data.get("x") is not None else np.zeros((0, 0))
        sigma = (
            np.asarray(data["sigma"], dtype=float)
            if data.get("sigma") is not None
            else np.linalg.norm(u, axis=1)
        )
        eta = np.asarray(data["eta"], dtype=float) if data.get("eta") is not None else np.zeros((0, 0))
        return cls(
            x=x,
            u=u,
            sigma=sigma,
            eta=eta,
            mu1=np.asarray(data.get("mu1") or [], dtype=float),
            mu2=np.asarray(data.get("mu2") or [], dtype=float),
            cost=float(data.get("cost", float("nan"))),
            status=Status(data.get("status", "optimal")),
            hold=data.get("hold", "foh"),
            rho_eff=data.get("rho_eff"),
            info=dict(data.get("info", {})),
        )


_STATUS = {
    "Solved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.INFEASIBLE,
    "AlmostPrimalInfeasible": Status.INFEASIBLE,
    "AlmostDualInfeasible": Status.INFEASIBLE,
}


def _run_clarabel(P, q, A, b, cones, settings: SolverSettings):
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.max_iter = settings.max_iter
    opts.tol_feas = settings.feas_tol
    opts.tol_gap_abs = settings.gap_tol
    opts.tol_gap_rel = settings.gap_tol
    opts.tol_infeas_abs = settings.feas_tol
    opts.tol_infeas_rel = settings.feas_tol
    solver = clarabel.DefaultSolver(sp.triu(P, format="csc"), q, A, b, cones, opts)
    result = solver.solve()
    status = _STATUS.get(str(result.status), Status.NUMERICAL_FAILURE)
    return result, status


def solve(program: ConicProgram, settings: Optional[SolverSettings] = None) -> Solution:
    """Solve ``program`` and unpack primal and equality-dual variables.

    A non-optimal status is reported on the returned solution, never
    raised; callers decide whether to retry.
    """
    settings = settings or SolverSettings()
    result, status = _run_clarabel(
        program.P, program.q, program.A, program.b, program.clarabel_cones(), settings
    )
    z = np.asarray(result.x)
    y = np.asarray(result.z)
    rows = program.rows
    sol = Solution(
        x=z[program.x_idx],
        u=z[program.u_idx],
        sigma=z[program.sigma_idx],
        eta=y[rows["dynamics"]],
        mu1=y[rows["initial"]],
        mu2=y[rows["terminal"]],
        cost=float(result.obj_val),
        status=status,
        hold=program.problem.disc.hold,
        rho_eff=program.problem.rho_eff,
        info={
            "solver_status": str(result.status),
            "iterations": int(result.iterations),
            "solve_time": float(result.solve_time),
            "r_prim": float(result.r_prim),
            "r_dual": float(result.r_dual),
            "obj_val_dual": float(result.obj_val_dual),
        },
    )
    if status is not Status.OPTIMAL:
        log.warning("solve at rho_eff=%s ended with %s", program.problem.rho_eff, result.status)
    if settings.dump_dir:
        _dump(program, sol, settings.dump_dir)
    return sol


def _dump(program: ConicProgram, sol: Solution, dump_dir: str):
    os.makedirs(dump_dir, exist_ok=True)
    tag = f"rho_{program.problem.rho_eff:.6f}"
    with open(os.path.join(dump_dir, f"program_{tag}.json"), "w") as fh:
        json.dump(program.to_dict(), fh)
    with open(os.path.join(dump_dir, f"solution_{tag}.json"), "w") as fh:
        json.dump(sol.to_dict(), fh)


def solve_problem(problem: TrajectoryProblem, settings: Optional[SolverSettings] = None) -> Solution:
    return solve(build_program(problem), settings)


def evaluate_cost(problem: TrajectoryProblem, x, sigma) -> float:
    """Objective value recomputed from primal vertex arrays."""
    cost = problem.cost
    total = float(cost.quadrature_weights @ cost.running(sigma))
    if cost.terminal_weight > 0:
        total += cost.terminal_weight * float(np.linalg.norm(np.asarray(x)[-1] - cost.terminal_target))
    return total


@dataclass
class AssumptionReport:
    equality_rank: int
    equality_rows: int
    equality_full_rank: bool
    controllability_rank: int
    controllable: bool
    slater_status: str
    slater_margin: Optional[float]
    slater_ok: bool
    terminal_optimality: str = "not machine-checkable"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _slater_probe(program: ConicProgram, settings: SolverSettings):
    """Maximize ``min_i (rho_max - sigma_i)`` over the constraint set, capped at the band width."""
    prob = program.problem
    n = program.n_vars
    s_col = n
    A = program.A.tocoo()
    upper = program.rows["sigma_upper"]
    r = np.concatenate([A.row, upper, [A.shape[0]]])
    c = np.concatenate([A.col, np.full(upper.size, s_col), [s_col]])
    v = np.concatenate([A.data, np.ones(upper.size), [1.0]])
    A2 = sp.csc_matrix((v, (r, c)), shape=(A.shape[0] + 1, n + 1))
    b2 = np.concatenate([program.b, [prob.rho_max - prob.rho_min]])
    q2 = np.zeros(n + 1)
    q2[s_col] = -1.0
    P2 = sp.csc_matrix((n + 1, n + 1))
    cones = program.clarabel_cones() + [clarabel.NonnegativeConeT(1)]
    result, status = _run_clarabel(P2, q2, A2, b2, cones, settings)
    margin = float(np.asarray(result.x)[s_col]) if status is Status.OPTIMAL else None
    return status, margin


def assumption_diagnostics(
    problem: TrajectoryProblem, settings: Optional[SolverSettings] = None
) -> AssumptionReport:
    """Checks for the standing assumptions that admit a numerical test.

    Covers the rank of the stacked equality Jacobian over ``(x, u, sigma)``,
    controllability of ``(A, B0 + A B1)`` and a strict-feasibility probe.
    Whether the optimal terminal state forces nonzero control cannot be
    decided numerically and is reported as such.
    """
    settings = settings or SolverSettings()
    program = build_program(problem)
    n_eq = program.n_equality_rows
    primary = np.concatenate(
        [program.x_idx.ravel(), program.u_idx.ravel(), program.sigma_idx]
    )
    jac = program.A[:n_eq][:, primary].toarray()
    sv = np.linalg.svd(jac, compute_uv=False)
    thresh = max(jac.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    eq_rank = int(np.sum(sv > thresh))
    c_rank, controllable = check_controllability(problem.disc)
    status, margin = _slater_probe(program, settings)
    return AssumptionReport(
        equality_rank=eq_rank,
        equality_rows=n_eq,
        equality_full_rank=eq_rank == n_eq,
        controllability_rank=c_rank,
        controllable=controllable,
        slater_status=_slater_label(status, margin, settings.feas_tol),
        slater_margin=margin,
        slater_ok=status is Status.OPTIMAL and margin is not None and margin > 10 * settings.feas_tol,
    )


def _slater_label(status: Status, margin: Optional[float], feas_tol: float) -> str:
    # the margin is free, so a negative optimum means no feasible point at all
    if status is not Status.OPTIMAL or margin is None:
        return status.value
    if margin < -10 * feas_tol:
        return "infeasible"
    if margin <= 10 * feas_tol:
        return "not_strictly_feasible"
    return "strictly_feasible"
