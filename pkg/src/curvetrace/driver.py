"""End-to-end pipeline: rescale into the unit frame, compute key points,
cluster singular points, run the four tracing passes (try, resume, boundary,
ovals) and assemble the final approximation in original coordinates.

Also provides verify_epsilon, the measurement oracle used by the tests:
one-sided Hausdorff estimates between the produced chains and a densely
sampled rendering of the curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cluster import Cluster, natural_clusters
from .geometry import Box, Chain, TracePoint
from .keypoints import (
    KeyPointReport,
    boundary_points,
    fencing_points,
    pseudo_singular_points,
    shrink_box_off_singulars,
    singular_points,
    witness_points,
)
from .poly import CurveSystem, rescale_system_detailed
from .solver import SolverOptions
from .tracer import (
    TAG_BOUNDARY,
    TAG_RESUME,
    TAG_TRY,
    TraceConfig,
    _segment_distance,
    plot_main,
    plot_oval,
)

MODES = ("practical", "robust")
COEFF_MODES = ("exact", "perturbed")


@dataclass
class RunConfig:
    eps: float
    rho: float = 1.6
    mode: str = "practical"
    coefficient_mode: str = "exact"
    seed: int = 0
    corrector_tol: float = 1e-10
    imag_tol: float = 1e-8
    dedup_radius: float = 1e-8
    h_min: float = 1e-7
    total_degree_cap: int = 20000
    threads: int | None = None
    drop_rule: str = "hysteresis"
    pseudo_eps: float | None = None  # threshold for |g_i|; defaults to eps
    fence_growth_cap: int = 6  # doublings allowed when a pseudo fence misses the curve

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.rho < 1.6:
            raise ValueError("rho must be at least 1.6")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.coefficient_mode not in COEFF_MODES:
            raise ValueError(f"coefficient_mode must be one of {COEFF_MODES}")

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            tol=1e-10,
            total_degree_cap=self.total_degree_cap,
            imag_tol=self.imag_tol,
            dedup_radius=self.dedup_radius,
            threads=self.threads,
        )

    def trace_config(self) -> TraceConfig:
        return TraceConfig(
            mode=self.mode,
            rho=self.rho,
            corrector_tol=self.corrector_tol,
            h_min=self.h_min,
            drop_rule=self.drop_rule,
        )


@dataclass
class ApproxCurve:
    nvars: int
    chains: list[Chain] = field(default_factory=list)
    singular_points: list[np.ndarray] = field(default_factory=list)
    clusters: list[Cluster] = field(default_factory=list)
    jump_reports: list[tuple[list[float], str]] = field(default_factory=list)
    unused_witness: list[np.ndarray] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    key_points: KeyPointReport | None = None


def approx_plot(sys: CurveSystem, box: Box, cfg: RunConfig) -> ApproxCurve:
    """Compute an eps-approximation of the real curve of ``sys`` inside ``box``.

    Pipeline: (1) singular or pseudo-singular points per coefficient mode,
    (2) natural clusters at radius eps/2 giving delta, (3) fencing points per
    cluster, (4) boundary points, (5) witness points outside the cluster
    balls, (6)-(9) the try / resume / boundary / oval tracing passes in that
    order, (10) assembly with all coordinates mapped back to the input frame.
    """
    if box.nvars != sys.nvars:
        raise ValueError("box dimension does not match the system")
    rescaled = rescale_system_detailed(sys, box)
    ssys, amap = rescaled.system, rescaled.map
    sbox = amap.forward_box(box)
    eps_s = amap.forward_distance(cfg.eps)
    sopts = cfg.solver_options()
    diagnostics: list[str] = []
    stats: dict = {"mode": cfg.mode, "coefficient_mode": cfg.coefficient_mode}

    # (1) singular / pseudo-singular points
    if cfg.coefficient_mode == "exact":
        sing = singular_points(ssys, sbox, cfg.seed, solver_opts=sopts)
        mode_label = "exact-singular"
    else:
        pseudo_eps = cfg.pseudo_eps if cfg.pseudo_eps is not None else cfg.eps
        # |g_i| thresholds transport to the working frame via the coefficient scales
        eps_per_poly = [pseudo_eps * c for c in rescaled.coeff_scales]
        sing = pseudo_singular_points(ssys, sbox, pseudo_eps, cfg.seed,
                                      eps_per_poly=eps_per_poly, solver_opts=sopts)
        mode_label = "pseudo-singular"
    stats["singular_found"] = len(sing)

    # assumption (i): no singular point on the boundary
    sbox = shrink_box_off_singulars(sbox, sing)

    # (2) natural clusters
    clusters, delta = natural_clusters(sing, eps_s / 2.0)
    stats["clusters"] = len(clusters)
    stats["delta"] = delta

    # (3) fencing points, radius delta, grown for pseudo clusters the sphere misses
    cwp: list[TracePoint] = []
    fence_radii: list[float] = []
    for k, cl in enumerate(clusters):
        radius = delta
        pts = fencing_points(ssys, cl.center, radius, cfg.seed + 17 * k, solver_opts=sopts)
        if not pts and cfg.coefficient_mode == "perturbed":
            # a pseudo-singular point need not lie on the curve; the fencing
            # sphere must reach the curve to cut off the unstable region
            for _ in range(cfg.fence_growth_cap):
                radius *= 2.0
                pts = fencing_points(ssys, cl.center, radius, cfg.seed + 17 * k, solver_opts=sopts)
                if pts:
                    break
            if pts:
                diagnostics.append(
                    f"fencing radius for pseudo cluster {k} grown to {radius:.3e}"
                )
        cwp.extend(pts)
        fence_radii.append(radius)
    stats["fencing_points"] = len(cwp)

    # (4) boundary points
    bwp = boundary_points(ssys, sbox, cfg.seed + 991, solver_opts=sopts, diagnostics=diagnostics)
    stats["boundary_points"] = len(bwp)

    # (5) witness points outside the cluster balls
    witness = witness_points(ssys, sbox, cfg.seed + 1993, solver_opts=sopts, diagnostics=diagnostics)
    stats["witness_found"] = len(witness)
    rwp: list[np.ndarray] = []
    for w in witness:
        inside = any(
            np.linalg.norm(w - cl.center) <= fence_radii[k] for k, cl in enumerate(clusters)
        )
        if not inside:
            rwp.append(w)
    stats["witness_outside_fences"] = len(rwp)

    key_points = KeyPointReport(
        singular=[amap.inverse(p) for p in sing],
        fencing=[tp.copy() for tp in cwp],
        boundary=[tp.copy() for tp in bwp],
        witness=[amap.inverse(p) for p in rwp],
        mode=mode_label,
    )

    # (6)-(9) tracing passes, order fixed: try, resume, boundary, ovals
    tcfg = cfg.trace_config()
    res_try = plot_main(ssys, sbox, cwp, bwp, rwp, delta, TAG_TRY, tcfg)
    front = res_try.front
    stats["front_after_try"] = len(front)
    res_resume = plot_main(ssys, sbox, front, bwp, rwp, delta, TAG_RESUME, tcfg)
    stats["front_unconsumed"] = sum(1 for tp in front if tp.c == 0)
    res_boundary = plot_main(ssys, sbox, bwp, cwp, rwp, delta, TAG_BOUNDARY, tcfg)
    res_oval = plot_oval(ssys, sbox, rwp, cwp + bwp, delta, tcfg)

    all_chains = res_try.chains + res_resume.chains + res_boundary.chains + res_oval.chains
    all_chains = [c for c in all_chains if len(c.vertices) >= 2 or c.closed]
    reports = res_try.reports + res_resume.reports + res_boundary.reports + res_oval.reports
    warnings = (
        diagnostics
        + res_try.warnings
        + res_resume.warnings
        + res_boundary.warnings
        + res_oval.warnings
    )

    # final witness sweep: anything within segment tolerance of a chain was traced over
    tol_hit = max(2.0 * cfg.corrector_tol, 0.05 * delta, delta / 8.0)
    survivors = []
    for w in rwp:
        if _point_near_chains(w, all_chains, tol_hit):
            continue
        survivors.append(w)

    stats["chains"] = len(all_chains)
    stats["closed_chains"] = sum(1 for c in all_chains if c.closed)
    stats["fencing_counters"] = [tp.c for tp in cwp]
    stats["boundary_counters"] = [tp.c for tp in bwp]
    stats["jump_reports"] = len(reports)
    stats["warnings"] = warnings
    stats["fence_radii"] = fence_radii

    # (10) map everything back to the original frame
    out = ApproxCurve(nvars=sys.nvars, stats=stats, key_points=key_points)
    for ch in all_chains:
        mapped = Chain(
            vertices=[_clip_into(amap.inverse(v), box) for v in ch.vertices],
            closed=ch.closed,
            start_kind=ch.start_kind,
            end_kind=ch.end_kind,
        )
        out.chains.append(mapped)
    if cfg.coefficient_mode == "exact":
        out.singular_points = [_clip_into(amap.inverse(p), box) for p in sing]
    out.clusters = [
        Cluster(
            center=amap.inverse(cl.center),
            members=[amap.inverse(m) for m in cl.members],
            radius=amap.inverse_distance(cl.radius),
        )
        for cl in clusters
    ]
    out.jump_reports = [
        (amap.inverse(loc).tolist(), desc) for loc, desc in reports
    ]
    out.unused_witness = [amap.inverse(w) for w in survivors]
    return out


def _clip_into(x: np.ndarray, box: Box, tol: float = 1e-9) -> np.ndarray:
    lo = box.lower - tol * (1 + box.widths)
    hi = box.upper + tol * (1 + box.widths)
    if np.all(x >= lo) and np.all(x <= hi):
        return np.minimum(np.maximum(x, box.lower), box.upper)
    return x


def _point_near_chains(p: np.ndarray, chains: list[Chain], tol: float) -> bool:
    for ch in chains:
        verts = ch.vertices
        for a, b in zip(verts[:-1], verts[1:]):
            if _segment_distance(p, a, b, 0.05) <= tol:
                return True
    return False


# ----------------------------------------------------------------------
# epsilon verification


@dataclass
class EpsilonReport:
    curve_to_chain: float | None
    chain_to_curve: float | None

    def both_within(self, eps: float) -> bool:
        return (
            self.curve_to_chain is not None
            and self.chain_to_curve is not None
            and self.curve_to_chain <= eps
            and self.chain_to_curve <= eps
        )


def sample_curve_grid(sys: CurveSystem, box: Box, resolution: float) -> np.ndarray:
    """Sign-change oracle for plane curves: sample the zero set of f on a
    regular grid at the given resolution via linear interpolation along grid
    edges.  Independent of the tracer; used as the measurement reference."""
    if sys.nvars != 2:
        raise ValueError("grid oracle is 2-D only")
    f = sys.polys[0]
    nx = max(2, int(math.ceil(box.widths[0] / resolution)))
    ny = max(2, int(math.ceil(box.widths[1] / resolution)))
    xs = np.linspace(box.lower[0], box.upper[0], nx + 1)
    ys = np.linspace(box.lower[1], box.upper[1], ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    vals = f.eval_grid(pts).reshape(nx + 1, ny + 1)

    samples = []
    # vertical edges: sign change along x
    sign = np.signbit(vals)
    changes = sign[:-1, :] != sign[1:, :]
    ii, jj = np.nonzero(changes)
    v0 = vals[ii, jj]
    v1 = vals[ii + 1, jj]
    t = v0 / (v0 - v1)
    samples.append(np.column_stack([xs[ii] + t * (xs[ii + 1] - xs[ii]), ys[jj]]))
    # horizontal edges: sign change along y
    changes = sign[:, :-1] != sign[:, 1:]
    ii, jj = np.nonzero(changes)
    v0 = vals[ii, jj]
    v1 = vals[ii, jj + 1]
    t = v0 / (v0 - v1)
    samples.append(np.column_stack([xs[ii], ys[jj] + t * (ys[jj + 1] - ys[jj])]))
    out = np.concatenate(samples) if samples else np.zeros((0, 2))
    return out


def _densify_chains(curve: ApproxCurve, spacing: float) -> np.ndarray:
    points = [np.asarray(p, dtype=float) for p in curve.singular_points]
    for ch in curve.chains:
        verts = ch.vertices
        if len(verts) == 1:
            points.append(verts[0])
            continue
        for a, b in zip(verts[:-1], verts[1:]):
            seg = np.linalg.norm(b - a)
            k = max(1, int(math.ceil(seg / spacing)))
            for t in np.linspace(0.0, 1.0, k + 1)[:-1]:
                points.append(a + t * (b - a))
        points.append(verts[-1])
    return np.asarray(points) if points else np.zeros((0, curve.nvars))


def verify_epsilon(
    curve: ApproxCurve,
    sys: CurveSystem,
    box: Box,
    n_samples: int = 10000,
    parametrization=None,
    grid_resolution: float | None = None,
) -> EpsilonReport:
    """Measured one-sided Hausdorff distances between the approximation and
    a densely sampled rendering of the curve.

    The curve reference comes from ``parametrization`` (a callable mapping
    t in [0,1) to a point) when supplied, else from the 2-D sign-change grid
    oracle.  For n >= 3 without a parametrization only the chain-to-curve
    direction is measured, via Newton projection of every chain vertex.
    """
    if parametrization is not None:
        ts = np.linspace(0.0, 1.0, n_samples, endpoint=False)
        samples = np.asarray([parametrization(t) for t in ts], dtype=float)
        spacing = _typical_spacing(samples)
    elif sys.nvars == 2:
        res = grid_resolution if grid_resolution is not None else float(np.min(box.widths)) / 400.0
        samples = sample_curve_grid(sys, box, res)
        spacing = res
    else:
        samples = None
        spacing = None

    chain_points = None
    if samples is not None:
        dense_spacing = max(spacing * 0.5, 1e-6)
        chain_points = _densify_chains(curve, dense_spacing)
        if len(samples) == 0:
            curve_to_chain = 0.0
        elif len(chain_points) == 0:
            curve_to_chain = math.inf
        else:
            tree = cKDTree(chain_points)
            curve_to_chain = float(np.max(tree.query(samples)[0]))
    else:
        curve_to_chain = None

    vertices = [v for ch in curve.chains for v in ch.vertices]
    if not vertices:
        chain_to_curve = 0.0  # sup over an empty set
    elif samples is None:
        chain_to_curve = _projection_distance(sys, vertices)
    elif len(samples) == 0:
        chain_to_curve = math.inf  # chains exist but the oracle sees no curve
    else:
        tree = cKDTree(samples)
        chain_to_curve = float(np.max(tree.query(np.asarray(vertices))[0]))
    return EpsilonReport(curve_to_chain=curve_to_chain, chain_to_curve=chain_to_curve)


def _typical_spacing(samples: np.ndarray) -> float:
    if len(samples) < 2:
        return 1e-3
    d = np.linalg.norm(np.diff(samples, axis=0), axis=1)
    return float(np.median(d[d > 0])) if np.any(d > 0) else 1e-3


def _projection_distance(sys: CurveSystem, vertices: list[np.ndarray]) -> float:
    from .numeric import NewtonError, newton_correct, tangent_frame

    worst = 0.0
    for q in vertices:
        try:
            frame = tangent_frame(sys.jacobian_at(q))
            res = newton_correct(sys, q, frame.tangent, 1e-12, max_iter=50)
            worst = max(worst, float(np.linalg.norm(res.point - q)))
        except (NewtonError, ValueError):
            worst = max(worst, math.inf)
    return worst
