"""Lossless convexification of annular control-norm bounds with piecewise-linear controls."""

from .certify import (
    CertificationReport,
    certify,
    delta_bound,
    edge_max_norm,
    edge_min_norm,
)
from .discretization import (
    ContinuousSystem,
    DiscreteSystem,
    discretize_zoh,
    integrate_stm,
    rollout,
    zoh_system,
)
from .errors import IllConditionedError, SearchFailure, SolverError, ValidationError
from .program import (
    ConicProgram,
    CostSpec,
    Solution,
    SolverSettings,
    Status,
    TrajectoryProblem,
    build_program,
    solve,
    solve_problem,
)
from .search import Classification, run_search, sweep, ternary_search
from .spectra import EigenStructure, eigen_structure, perturb, sample_q

__version__ = "0.1.0"

__all__ = [
    "CertificationReport",
    "Classification",
    "ConicProgram",
    "ContinuousSystem",
    "CostSpec",
    "DiscreteSystem",
    "EigenStructure",
    "IllConditionedError",
    "SearchFailure",
    "Solution",
    "SolverError",
    "SolverSettings",
    "Status",
    "TrajectoryProblem",
    "ValidationError",
    "build_program",
    "certify",
    "delta_bound",
    "discretize_zoh",
    "edge_max_norm",
    "edge_min_norm",
    "eigen_structure",
    "integrate_stm",
    "perturb",
    "rollout",
    "run_search",
    "sample_q",
    "solve",
    "solve_problem",
    "sweep",
    "ternary_search",
    "zoh_system",
]
