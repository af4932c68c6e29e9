"""CSV and JSON writers for trajectories, controls, sweeps and reports."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .certify import edge_min_norm
from .discretization import DiscreteSystem
from .program import Solution


def _clean(obj):
    """Make numpy scalars/arrays and non-finite floats JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_trajectory(path, solution: Solution, disc: DiscreteSystem) -> Path:
    """One row per vertex: ``t`` then every state component."""
    path = Path(path)
    n_x = solution.x.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{k}" for k in range(n_x)])
        for t, x in zip(disc.times, solution.x):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
    return path


def write_controls(path, solution: Solution, disc: DiscreteSystem) -> Path:
    """Per control: time, components, norm and the minimum norm on the following edge.

    For zero-order hold the control is constant on its edge, so the edge
    minimum equals the norm.
    """
    path = Path(path)
    u = solution.u
    n_u = u.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"u{k}" for k in range(n_u)] + ["norm", "edge_min_norm"])
        for i, ui in enumerate(u):
            if solution.hold == "zoh":
                edge = repr(float(np.linalg.norm(ui)))
            elif i + 1 < len(u):
                edge = repr(edge_min_norm(ui, u[i + 1]))
            else:
                edge = ""
            w.writerow(
                [repr(float(disc.times[i]))]
                + [repr(float(v)) for v in ui]
                + [repr(float(np.linalg.norm(ui))), edge]
            )
    return path


def write_sweep(path, outcomes: Iterable) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho_eff", "classification", "cost"])
        for o in outcomes:
            cost = "" if not math.isfinite(o.cost) else repr(float(o.cost))
            w.writerow([repr(float(o.rho_eff)), o.classification.value, cost])
    return path


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
