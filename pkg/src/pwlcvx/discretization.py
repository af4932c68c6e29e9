"""Exact discretization of LTI dynamics under first- and zero-order hold.

With a piecewise-linear control between grid vertices, one segment of
``xdot = A_c x + B_c u`` maps to

    x[i+1] = A x[i] + B0 u[i] + B1 u[i+1]

where ``A``, ``B0`` and ``B1`` are the state transition matrices of the
segment. They are obtained by integrating their matrix ODEs with a
fixed-step RK4 scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import ValidationError

Hold = Literal["foh", "zoh"]


def _as_matrix(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class ContinuousSystem:
    """Continuous LTI pair ``(A_c, B_c)``."""

    a_c: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        a_c = _as_matrix(self.a_c, "a_c")
        b_c = _as_matrix(self.b_c, "b_c")
        if a_c.shape[0] != a_c.shape[1]:
            raise ValidationError(f"a_c must be square, got {a_c.shape}")
        if b_c.shape[0] != a_c.shape[0]:
            raise ValidationError(
                f"b_c has {b_c.shape[0]} rows but the state has dimension {a_c.shape[0]}"
            )
        object.__setattr__(self, "a_c", a_c)
        object.__setattr__(self, "b_c", b_c)

    @property
    def n_x(self) -> int:
        return self.a_c.shape[0]

    @property
    def n_u(self) -> int:
        return self.b_c.shape[1]


@dataclass(frozen=True)
class DiscreteSystem:
    """Discrete dynamics on a uniform grid of ``n_segments`` edges.

    For ``hold="foh"`` the update is ``A x_i + B0 u_i + B1 u_{i+1}`` with
    ``n_segments + 1`` control vertices. For ``hold="zoh"`` ``b1`` is None,
    the update is ``A x_i + B0 u_i`` and there are ``n_segments`` controls.
    """

    a: np.ndarray
    b0: np.ndarray
    b1: Optional[np.ndarray]
    dt: float
    n_segments: int
    hold: Hold = "foh"
    t_f: float = field(default=None)

    def __post_init__(self):
        a = _as_matrix(self.a, "a")
        b0 = _as_matrix(self.b0, "b0")
        if a.shape[0] != a.shape[1]:
            raise ValidationError(f"a must be square, got {a.shape}")
        if b0.shape[0] != a.shape[0]:
            raise ValidationError("b0 row count must equal the state dimension")
        if self.hold not in ("foh", "zoh"):
            raise ValidationError(f"unknown hold {self.hold!r}")
        if self.hold == "foh":
            if self.b1 is None:
                raise ValidationError("first-order hold requires b1")
            b1 = _as_matrix(self.b1, "b1")
            if b1.shape != b0.shape:
                raise ValidationError("b0 and b1 must have the same shape")
        else:
            if self.b1 is not None:
                raise ValidationError("zero-order hold takes no b1")
            b1 = None
        n_segments = int(self.n_segments)
        if n_segments < 1 or n_segments != self.n_segments:
            raise ValidationError("n_segments must be a positive integer")
        dt = float(self.dt)
        if not np.isfinite(dt) or dt <= 0:
            raise ValidationError("dt must be positive and finite")
        t_f = dt * n_segments if self.t_f is None else float(self.t_f)
        if abs(dt * n_segments - t_f) > 1e-12 * t_f:
            raise ValidationError("dt * n_segments must equal t_f")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "n_segments", n_segments)
        object.__setattr__(self, "t_f", t_f)

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b0.shape[1]

    @property
    def n_controls(self) -> int:
        return self.n_segments + 1 if self.hold == "foh" else self.n_segments

    @property
    def times(self) -> np.ndarray:
        """Vertex times ``t_1 = 0, ..., t_{N+1} = t_f``."""
        return self.dt * np.arange(self.n_segments + 1)

    @property
    def b_eff(self) -> np.ndarray:
        """Input matrix of the controllability test, ``B0 + A B1`` (or ``B``)."""
        if self.hold == "zoh":
            return self.b0
        return self.b0 + self.a @ self.b1

    def with_a(self, a) -> "DiscreteSystem":
        return replace(self, a=np.array(a, dtype=float))


def _check_grid(t_f, n_segments):
    if not np.isfinite(t_f) or t_f <= 0:
        raise ValidationError("t_f must be positive and finite")
    if int(n_segments) != n_segments or n_segments < 1:
        raise ValidationError("n_segments must be a positive integer")


def integrate_stm(
    sys: ContinuousSystem, t_f: float, n_segments: int, substeps: int = 64
) -> DiscreteSystem:
    """FOH matrices from RK4 integration of the transition-matrix ODEs.

    Over one segment of length ``dt`` (local time ``s`` in ``[0, dt]``)::

        Phi_A'  = A_c Phi_A,                     Phi_A(0)  = I
        Phi_B0' = A_c Phi_B0 + B_c (dt - s)/dt,  Phi_B0(0) = 0
        Phi_B1' = A_c Phi_B1 + B_c s/dt,         Phi_B1(0) = 0

    The system is time-invariant and the grid uniform, so a single
    segment is integrated and reused for every edge.
    """
    _check_grid(t_f, n_segments)
    if int(substeps) != substeps or substeps < 1:
        raise ValidationError("substeps must be a positive integer")
    n_x, n_u = sys.n_x, sys.n_u
    dt = t_f / n_segments
    h = dt / substeps

    def rhs(s, y):
        phi_a = y[:, :n_x]
        phi_b0 = y[:, n_x : n_x + n_u]
        phi_b1 = y[:, n_x + n_u :]
        return np.hstack(
            [
                sys.a_c @ phi_a,
                sys.a_c @ phi_b0 + sys.b_c * ((dt - s) / dt),
                sys.a_c @ phi_b1 + sys.b_c * (s / dt),
            ]
        )

    y = np.hstack([np.eye(n_x), np.zeros((n_x, 2 * n_u))])
    for k in range(substeps):
        s = k * h
        k1 = rhs(s, y)
        k2 = rhs(s + h / 2, y + h / 2 * k1)
        k3 = rhs(s + h / 2, y + h / 2 * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    return DiscreteSystem(
        a=y[:, :n_x],
        b0=y[:, n_x : n_x + n_u],
        b1=y[:, n_x + n_u :],
        dt=dt,
        n_segments=n_segments,
        t_f=t_f,
    )


def discretize_zoh(sys: ContinuousSystem, t_f: float, n_segments: int):
    """Zero-order-hold pair ``(A, B)`` via the augmented matrix exponential."""
    _check_grid(t_f, n_segments)
    n_x, n_u = sys.n_x, sys.n_u
    dt = t_f / n_segments
    m = np.zeros((n_x + n_u, n_x + n_u))
    m[:n_x, :n_x] = sys.a_c
    m[:n_x, n_x:] = sys.b_c
    e = expm(m * dt)
    return e[:n_x, :n_x], e[:n_x, n_x:]


def zoh_system(sys: ContinuousSystem, t_f: float, n_segments: int) -> DiscreteSystem:
    a, b = discretize_zoh(sys, t_f, n_segments)
    return DiscreteSystem(
        a=a, b0=b, b1=None, dt=t_f / n_segments, n_segments=n_segments, hold="zoh", t_f=t_f
    )


def check_controllability(disc: DiscreteSystem):
    """Rank of ``[Bc, A Bc, ..., A^(n-1) Bc]`` with ``Bc = B0 + A B1``.

    Returns ``(rank, controllable)``. Singular values below
    ``n_x * eps * sigma_max`` count as zero.
    """
    n_x = disc.n_x
    blocks = [disc.b_eff]
    for _ in range(n_x - 1):
        blocks.append(disc.a @ blocks[-1])
    ctrb = np.hstack(blocks)
    sv = np.linalg.svd(ctrb, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0, False
    rank = int(np.sum(sv > n_x * np.finfo(float).eps * sv[0]))
    return rank, rank == n_x


def rollout(disc: DiscreteSystem, x_init, u: Sequence) -> np.ndarray:
    """Propagate the discrete dynamics from ``x_init`` under controls ``u``.

    Returns an ``(N+1, n_x)`` array of vertex states.
    """
    x0 = np.asarray(x_init, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float)
    if x0.shape != (disc.n_x,):
        raise ValidationError(f"x_init must have length {disc.n_x}")
    if u.ndim == 1 and disc.n_u == 1:
        u = u[:, None]
    if u.shape != (disc.n_controls, disc.n_u):
        raise ValidationError(
            f"expected {disc.n_controls} controls of dimension {disc.n_u}, got {u.shape}"
        )
    xs = np.empty((disc.n_segments + 1, disc.n_x))
    xs[0] = x0
    for i in range(disc.n_segments):
        nxt = disc.a @ xs[i] + disc.b0 @ u[i]
        if disc.hold == "foh":
            nxt = nxt + disc.b1 @ u[i + 1]
        xs[i + 1] = nxt
    return xs
