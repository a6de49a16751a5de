"""Finite-volume laboratory for divergence-form parabolic equations with rough coefficients."""

from ._kernels import BACKEND
from .certify import (
    Certificate,
    Cutoff,
    certify_harnack,
    certify_limit_behavior,
    certify_local_bound,
    certify_max_principle,
    certify_pointwise_harnack,
    check_caccioppoli,
    estimate_hoelder,
)
from .grid import (
    CellSet,
    ContainmentError,
    Cylinder,
    GridError,
    SpaceTimeGrid,
    make_grid,
    materialize,
    parabolic_boundary,
    pseudo_distance,
)
from .kernel import (
    EnlargeBoxError,
    check_chapman_kolmogorov,
    elliptic_green,
    estimate_kernel,
    estimate_kernel_family,
    fit_gaussian_bounds,
    heat_kernel,
)
from .solver import Boundary, PreconditionError, ProblemSpec, SolutionField, SolverConfig, SolverError, solve, weak_residual
from .structure import LinearCoefficients, StructureBounds, StructureFunctions, named_field
from .widder import BorelMeasure, check_growth, initial_trace, represent, trace_roundtrip

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BorelMeasure",
    "Boundary",
    "CellSet",
    "Certificate",
    "ContainmentError",
    "Cutoff",
    "Cylinder",
    "EnlargeBoxError",
    "GridError",
    "LinearCoefficients",
    "PreconditionError",
    "ProblemSpec",
    "SolutionField",
    "SolverConfig",
    "SolverError",
    "SpaceTimeGrid",
    "StructureBounds",
    "StructureFunctions",
    "certify_harnack",
    "certify_limit_behavior",
    "certify_local_bound",
    "certify_max_principle",
    "certify_pointwise_harnack",
    "check_caccioppoli",
    "check_chapman_kolmogorov",
    "check_growth",
    "elliptic_green",
    "estimate_hoelder",
    "estimate_kernel",
    "estimate_kernel_family",
    "fit_gaussian_bounds",
    "heat_kernel",
    "initial_trace",
    "make_grid",
    "materialize",
    "named_field",
    "parabolic_boundary",
    "pseudo_distance",
    "represent",
    "solve",
    "trace_roundtrip",
    "weak_residual",
]
