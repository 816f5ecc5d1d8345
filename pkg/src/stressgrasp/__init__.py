"""Stress-bounded grasp quality metric, its elastostatic precomputation and a
branch-and-bound contact planner."""
from __future__ import annotations

from .bem import MaterialParams, StressMaps, precompute_maps
from .config import RunConfig
from .errors import InputError, NumericalError, StressGraspError
from .geom import ContactPoint, GeometricMoments, SurfaceMesh, compute_moments, load_mesh
from .metrics import MetricProblem, MetricReport, q_lower_bound, q_upper_bound
from .planner import Plan, branch_and_bound, exhaustive_plan

__version__ = "0.1.0"

__all__ = [
    "ContactPoint",
    "GeometricMoments",
    "InputError",
    "MaterialParams",
    "MetricProblem",
    "MetricReport",
    "NumericalError",
    "Plan",
    "RunConfig",
    "StressGraspError",
    "StressMaps",
    "SurfaceMesh",
    "branch_and_bound",
    "compute_moments",
    "exhaustive_plan",
    "load_mesh",
    "precompute_maps",
    "q_lower_bound",
    "q_upper_bound",
]
