"""curvetrace: eps-close polygonal approximation of implicit real algebraic
curves inside a box, bypassing small neighborhoods of singular points."""

from .cluster import Cluster, natural_clusters
from .driver import ApproxCurve, EpsilonReport, RunConfig, approx_plot, verify_epsilon
from .geometry import Box, Chain, TracePoint
from .keypoints import (
    KeyPointReport,
    boundary_points,
    fencing_points,
    pseudo_singular_points,
    singular_points,
    witness_points,
)
from .numeric import (
    NewtonError,
    TangentFrame,
    chord_error_bound,
    jump_check,
    newton_correct,
    omega,
    robust_step,
    tangent_frame,
)
from .poly import (
    AffineMap,
    CurveSystem,
    ParseError,
    PolyError,
    Polynomial,
    minor_determinants,
    parse_polynomial,
    render,
    rescale_system,
)
from .solver import (
    RefinementError,
    SolutionSet,
    SolverOptions,
    TotalDegreeCapError,
    ZeroDimSystem,
    dedup,
    refine_root,
    solve_zero_dim,
)
from .tracer import TraceConfig, TraceResult, plot_main, plot_oval, segment_hit, step_control

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "ApproxCurve",
    "Box",
    "Chain",
    "Cluster",
    "CurveSystem",
    "EpsilonReport",
    "KeyPointReport",
    "NewtonError",
    "ParseError",
    "PolyError",
    "Polynomial",
    "RefinementError",
    "RunConfig",
    "SolutionSet",
    "SolverOptions",
    "TangentFrame",
    "TotalDegreeCapError",
    "TraceConfig",
    "TracePoint",
    "TraceResult",
    "ZeroDimSystem",
    "approx_plot",
    "boundary_points",
    "chord_error_bound",
    "dedup",
    "fencing_points",
    "jump_check",
    "minor_determinants",
    "natural_clusters",
    "newton_correct",
    "omega",
    "parse_polynomial",
    "plot_main",
    "plot_oval",
    "pseudo_singular_points",
    "refine_root",
    "render",
    "rescale_system",
    "robust_step",
    "segment_hit",
    "singular_points",
    "solve_zero_dim",
    "step_control",
    "tangent_frame",
    "verify_epsilon",
    "witness_points",
]
