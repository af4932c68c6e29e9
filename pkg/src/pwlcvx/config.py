"""JSON problem configuration and its translation into library objects."""

from __future__ import annotations

import json
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from .discretization import ContinuousSystem, integrate_stm, zoh_system
from .program import CostSpec, SolverSettings, TrajectoryProblem, quadrature_weights


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemConfig(_Strict):
    a_c: List[List[float]]
    b_c: List[List[float]]


class GridConfig(_Strict):
    t_f: PositiveFloat
    n_segments: PositiveInt
    substeps: PositiveInt = 64


class BoundsConfig(_Strict):
    rho_min: PositiveFloat
    rho_max: PositiveFloat
    rho_eff: Optional[float] = None

    @model_validator(mode="after")
    def _ordered(self):
        if not self.rho_min < self.rho_max:
            raise ValueError(f"rho_min ({self.rho_min}) must be below rho_max ({self.rho_max})")
        if self.rho_eff is not None and not self.rho_min <= self.rho_eff < self.rho_max:
            raise ValueError("rho_eff must lie in [rho_min, rho_max)")
        return self


class CostConfig(_Strict):
    terminal_weight: float = Field(0.0, ge=0)
    terminal_target: Optional[List[float]] = None
    running: Literal["linear", "quadratic"] = "quadratic"
    quadrature: Literal["trapezoid", "uniform"] = "trapezoid"


class TerminalConfig(_Strict):
    g_matrix: List[List[float]] = Field(default_factory=list)
    g_offset: List[float] = Field(default_factory=list)


class SettingsConfig(_Strict):
    eps: PositiveFloat = 1e-3
    eps_a: float = Field(1e-6, ge=0)
    seed: int = Field(0, ge=0)
    perturb: bool = True
    feas_tol: PositiveFloat = 1e-8
    gap_tol: PositiveFloat = 1e-8
    viol_tol: Optional[PositiveFloat] = None
    eps_eta: PositiveFloat = 1e-5
    rate: bool = True


class ProblemConfig(_Strict):
    system: SystemConfig
    grid: GridConfig
    bounds: BoundsConfig
    x_init: List[float]
    cost: CostConfig = Field(default_factory=CostConfig)
    terminal: TerminalConfig = Field(default_factory=TerminalConfig)
    settings: SettingsConfig = Field(default_factory=SettingsConfig)

    @model_validator(mode="after")
    def _dims(self):
        n_x = len(self.system.a_c)
        if any(len(row) != n_x for row in self.system.a_c):
            raise ValueError("system.a_c must be square")
        if len(self.system.b_c) != n_x or not self.system.b_c:
            raise ValueError("system.b_c must have one row per state")
        if len({len(row) for row in self.system.b_c}) != 1 or not self.system.b_c[0]:
            raise ValueError("system.b_c rows must share a positive length")
        if len(self.x_init) != n_x:
            raise ValueError(f"x_init must have length {n_x}")
        if self.cost.terminal_target is not None and len(self.cost.terminal_target) != n_x:
            raise ValueError(f"cost.terminal_target must have length {n_x}")
        if self.cost.terminal_weight > 0 and self.cost.terminal_target is None:
            raise ValueError("cost.terminal_target is required when terminal_weight > 0")
        if any(len(row) != n_x for row in self.terminal.g_matrix):
            raise ValueError(f"terminal.g_matrix rows must have length {n_x}")
        if len(self.terminal.g_offset) != len(self.terminal.g_matrix):
            raise ValueError("terminal.g_offset needs one entry per g_matrix row")
        return self

    @classmethod
    def load(cls, path) -> "ProblemConfig":
        with open(path) as fh:
            return cls.model_validate(json.load(fh))

    def continuous(self) -> ContinuousSystem:
        return ContinuousSystem(np.array(self.system.a_c), np.array(self.system.b_c))

    def solver_settings(self) -> SolverSettings:
        s = self.settings
        return SolverSettings(feas_tol=s.feas_tol, gap_tol=s.gap_tol, eps_eta=s.eps_eta)

    def problem(self, hold: str = "foh") -> TrajectoryProblem:
        sys = self.continuous()
        if hold == "zoh":
            disc = zoh_system(sys, self.grid.t_f, self.grid.n_segments)
        else:
            disc = integrate_stm(sys, self.grid.t_f, self.grid.n_segments, self.grid.substeps)
        target = self.cost.terminal_target or [0.0] * sys.n_x
        cost = CostSpec(
            terminal_weight=self.cost.terminal_weight,
            terminal_target=target,
            quadrature_weights=quadrature_weights(disc, self.cost.quadrature),
            running_kind=self.cost.running,
        )
        n_x = sys.n_x
        g = np.array(self.terminal.g_matrix, dtype=float).reshape(-1, n_x)
        return TrajectoryProblem(
            disc=disc,
            cost=cost,
            rho_min=self.bounds.rho_min,
            rho_max=self.bounds.rho_max,
            x_init=self.x_init,
            g_matrix=g,
            g_offset=np.array(self.terminal.g_offset, dtype=float),
        )
