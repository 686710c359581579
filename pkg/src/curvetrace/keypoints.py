"""Key points of the curve: singular points, pseudo-singular points, witness
points, fencing points (curve meets a sphere around a singular cluster), and
boundary points (curve meets the box faces).

Overdetermined systems (the singular locus F with all n minor determinants,
and the leave-one-out pseudo-singular systems) are squared before solving:
for n = 2 the two square subsystems {f, D1} and {f, D2} are solved and their
union filtered by the full residual; for general n the minors are replaced
by two independent random linear combinations and every candidate is
verified against the full system afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import Box, TracePoint
from .numeric import refine_root_square, tangent_frame
from .poly import CompiledSystem, CurveSystem, Polynomial, minor_determinants
from .solver import SolutionSet, SolverOptions, ZeroDimSystem, solve_zero_dim


class KeypointError(RuntimeError):
    pass


@dataclass
class KeyPointReport:
    singular: list[np.ndarray] = field(default_factory=list)
    fencing: list[TracePoint] = field(default_factory=list)
    boundary: list[TracePoint] = field(default_factory=list)
    witness: list[np.ndarray] = field(default_factory=list)
    mode: str = "exact-singular"


def _sigma_at(sys: CurveSystem, q: np.ndarray) -> tuple[float, np.ndarray]:
    frame = tangent_frame(sys.jacobian_at(q))
    return frame.sigma_min, frame.tangent


def _exact_eval_fn(polys: list[Polynomial]):
    """Evaluation callback that computes values and Jacobian in exact rational
    arithmetic (floats embed losslessly), then rounds once.  Kills the
    cancellation noise that stalls float Newton at multiple roots."""
    n = polys[0].nvars
    rows = [[p.differentiate(j) for j in range(n)] for p in polys]

    def fn(q):
        xs = [Fraction(float(v)) for v in q]
        vals = np.array([float(p.evaluate(xs)) for p in polys])
        jac = np.array([[float(d.evaluate(xs)) for d in row] for row in rows])
        return vals, jac

    return fn


def _exact_residual_inf(polys: list[Polynomial], q: np.ndarray) -> float:
    xs = [Fraction(float(v)) for v in q]
    return max(abs(float(p.evaluate(xs))) for p in polys)


def _gauss_newton_overdet(compiled: CompiledSystem, q0: np.ndarray, max_iter: int = 200) -> tuple[np.ndarray, float]:
    """Patient damped Gauss-Newton on an overdetermined system; returns the
    best iterate seen and its max-residual."""
    q = np.asarray(q0, dtype=float).copy()
    vals, jac = compiled.values_and_jacobian(q)
    best_q, best_res = q.copy(), float(np.max(np.abs(vals)))
    stale = 0
    for _ in range(max_iter):
        try:
            delta = np.linalg.lstsq(jac, vals, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        step = 1.0
        improved = False
        for _ in range(6):
            q_new = q - step * delta
            vals_new, jac_new = compiled.values_and_jacobian(q_new)
            res_new = float(np.max(np.abs(vals_new)))
            if res_new < best_res:
                q, vals, jac = q_new, vals_new, jac_new
                best_q, best_res = q.copy(), res_new
                improved = True
                break
            step *= 0.5
        if not improved:
            stale += 1
            q, vals, jac = q_new, vals_new, jac_new
        else:
            stale = 0
        if stale > 8 or best_res <= 1e-16 or not np.all(np.isfinite(q)):
            break
    return best_q, best_res


def _random_combination(polys: list[Polynomial], rng: np.random.Generator) -> Polynomial:
    out = Polynomial.zero(polys[0].nvars)
    for p in polys:
        out = out + p * Fraction(float(rng.normal()))
    return out


def _squared_systems(base: list[Polynomial], deltas: list[Polynomial], nvars: int,
                     rng: np.random.Generator) -> list[list[Polynomial]]:
    """Square out base + deltas (more equations than the nvars unknowns)."""
    missing = nvars - len(base)
    live = [d for d in deltas if not d.is_zero()]
    if missing <= 0:
        raise KeypointError("system already square or overdetermined base")
    if len(live) < missing:
        # not enough independent minors: singular locus is positive-dimensional
        # or empty in a degenerate way; nothing reliable to solve
        return []
    if missing == len(live):
        return [base + live]
    if missing == 1 and len(base) > 0:
        # n = 2 singular case handled by the caller; general n: two combos
        return [base + [_random_combination(live, rng)] for _ in range(2)]
    # leave-one-out pseudo systems: fill with independent combinations
    systems = []
    for _ in range(2):
        combos = [_random_combination(live, rng) for _ in range(missing)]
        systems.append(base + combos)
    return systems


def _solve_candidates(systems: list[list[Polynomial]], box: Box | None, seed: int,
                      opts: SolverOptions) -> list[np.ndarray]:
    points: list[np.ndarray] = []
    for k, polys in enumerate(systems):
        sol = solve_zero_dim(ZeroDimSystem(polys, box), seed + k, opts)
        points.extend(sol.points)
    return points


def singular_points(
    sys: CurveSystem,
    box: Box,
    seed: int,
    tol: float = 1e-8,
    merge_radius: float = 1e-4,
    solver_opts: SolverOptions | None = None,
) -> list[np.ndarray]:
    """Real in-box points where the curve's Jacobian drops rank.

    Solves square subsystems of F with the minor determinants, verifies every
    candidate against the full overdetermined system (all residuals <= tol),
    and re-refines with patient Newton / Gauss-Newton.  Multiple roots are
    only linearly accurate under plain Newton, so candidates within
    ``merge_radius`` are merged.
    """
    n = sys.nvars
    deltas = minor_determinants(sys)
    rng = np.random.default_rng(seed ^ 0x5EED)
    if n == 2:
        systems = [[sys.polys[0], d] for d in deltas if not d.is_zero()]
        if not systems:
            return []
    else:
        systems = _squared_systems(list(sys.polys), deltas, n, rng)
        if not systems:
            return []

    base_opts = solver_opts or SolverOptions()
    opts = SolverOptions(
        tol=base_opts.tol, total_degree_cap=base_opts.total_degree_cap,
        imag_tol=base_opts.imag_tol, dedup_radius=base_opts.dedup_radius,
        box_tol=base_opts.box_tol, patient_polish=True, threads=base_opts.threads,
    )
    # inflate the box slightly so refinement can pull near-boundary roots back
    search_box = Box(box.lower - 1e-6 * box.widths, box.upper + 1e-6 * box.widths)
    candidates = _solve_candidates(systems, search_box, seed, opts)

    full = CompiledSystem(list(sys.polys) + deltas, with_jacobian=True)
    refined: list[np.ndarray] = []
    for q in candidates:
        best_q, best_res = _gauss_newton_overdet(full, q)
        for polys in systems:
            sub = CompiledSystem(polys, with_jacobian=True)
            cand, _, _ = refine_root_square(sub.values_and_jacobian, best_q, tol=1e-14,
                                            max_iter=60, patient=True)
            res = float(np.max(np.abs(full.values(cand))))
            if res < best_res:
                best_q, best_res = cand, res
        if best_res <= tol and box.contains(best_q, tol=1e-9):
            refined.append(best_q)

    refined.sort(key=lambda p: tuple(p))
    out: list[np.ndarray] = []
    for p in refined:
        if any(np.linalg.norm(p - k) <= merge_radius * (1 + np.linalg.norm(p)) for k in out):
            continue
        out.append(p)
    return out


def pseudo_singular_points(
    sys: CurveSystem,
    box: Box,
    eps: float,
    seed: int,
    eps_per_poly: list[float] | None = None,
    tol: float = 1e-8,
    solver_opts: SolverOptions | None = None,
) -> list[np.ndarray]:
    """Critical points q of the (possibly perturbed) system with |g_i(q)| <= eps.

    For each i, the leave-one-out system E_i = {g_1,...,g_{i-1},g_{i+1},...}
    joined with the minor determinants is squared and solved; candidates must
    pass the full E_i residual check and the |g_i| threshold.  The union over
    i is deduplicated.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = sys.nvars
    deltas = minor_determinants(sys)
    rng = np.random.default_rng(seed ^ 0xA5)
    opts = solver_opts or SolverOptions()
    thresholds = eps_per_poly if eps_per_poly is not None else [eps] * len(sys.polys)

    found: list[np.ndarray] = []
    for i, g_i in enumerate(sys.polys):
        base = [p for k, p in enumerate(sys.polys) if k != i]
        systems = _squared_systems(base, deltas, n, rng)
        candidates = _solve_candidates(systems, box, seed + 101 * i, opts)
        full = CompiledSystem(base + deltas, with_jacobian=False) if base or deltas else None
        for q in candidates:
            if full is not None and full.residual_inf(q) > tol:
                continue
            if abs(g_i.evaluate([float(v) for v in q])) <= thresholds[i]:
                found.append(q)

    found.sort(key=lambda p: tuple(p))
    out: list[np.ndarray] = []
    for p in found:
        radius = opts.dedup_radius * (1 + np.linalg.norm(p))
        if any(np.linalg.norm(p - k) <= radius for k in out):
            continue
        out.append(p)
    return out


def witness_points(
    sys: CurveSystem,
    box: Box,
    seed: int,
    solver_opts: SolverOptions | None = None,
    diagnostics: list[str] | None = None,
) -> list[np.ndarray]:
    """Lagrange critical points of the distance to a random hyperplane.

    Solves the square system {F, J^T lambda = a} in (x, lambda) for a seeded
    random unit direction a and returns the in-box x-projections; guarantees
    at least one point on every closed smooth component.  An empty result is
    retried once with a fresh direction.
    """
    opts = solver_opts or SolverOptions()
    for attempt in range(2):
        rng = np.random.default_rng(seed + 7919 * attempt)
        a = rng.normal(size=sys.nvars)
        a /= np.linalg.norm(a)
        points = _witness_solve(sys, box, a, seed + attempt, opts)
        if points:
            return points
        if attempt == 0 and diagnostics is not None:
            diagnostics.append("witness solve returned no points; retrying with a fresh direction")
    return []


def _witness_solve(sys: CurveSystem, box: Box, a: np.ndarray, seed: int,
                   opts: SolverOptions) -> list[np.ndarray]:
    n = sys.nvars
    nn = 2 * n - 1  # variables (x, lambda)
    eqs = [p.pad_variables(nn) for p in sys.polys]
    for j in range(n):
        poly = Polynomial.constant(-Fraction(float(a[j])), nn)
        for i in range(n - 1):
            lam = Polynomial.variable(n + i, nn)
            poly = poly + sys.jac[i][j].pad_variables(nn) * lam
        eqs.append(poly)
    sol = solve_zero_dim(ZeroDimSystem(eqs, box=None), seed, opts)
    projections = []
    for z in sol.points:
        x = z[:n]
        if not box.contains(x, tol=opts.box_tol):
            continue
        if sys.residual_inf(x) > 1e-10:
            continue
        projections.append(x)
    projections.sort(key=lambda p: tuple(p))
    out: list[np.ndarray] = []
    for p in projections:
        radius = opts.dedup_radius * (1 + np.linalg.norm(p))
        if any(np.linalg.norm(p - k) <= radius for k in out):
            continue
        out.append(p)
    return out


def fencing_points(
    sys: CurveSystem,
    center: np.ndarray,
    radius: float,
    seed: int,
    solver_opts: SolverOptions | None = None,
) -> list[TracePoint]:
    """Intersections of the curve with the sphere around a singular cluster.

    Each intersection becomes a TracePoint whose direction points radially
    away from the center, seeding traces that leave the singular region.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = sys.nvars
    center = np.asarray(center, dtype=float)
    sphere = Polynomial.constant(-Fraction(float(radius)) ** 2, n)
    for j in range(n):
        x_j = Polynomial.variable(j, n)
        c_j = Polynomial.constant(Fraction(float(center[j])), n)
        diff = x_j - c_j
        sphere = sphere + diff * diff
    opts = solver_opts or SolverOptions()
    sol = solve_zero_dim(ZeroDimSystem(list(sys.polys) + [sphere], box=None), seed, opts)
    points = sorted(sol.points, key=lambda p: tuple(p))
    out = []
    for q in points:
        away = q - center
        norm = np.linalg.norm(away)
        if norm == 0:
            continue
        sigma, _ = _sigma_at(sys, q)
        out.append(TracePoint(q=q, v=away / norm, s=sigma, c=0))
    return out


def boundary_points(
    sys: CurveSystem,
    box: Box,
    seed: int,
    solver_opts: SolverOptions | None = None,
    diagnostics: list[str] | None = None,
) -> list[TracePoint]:
    """Intersections of the curve with the box faces, with inward directions.

    Substituting the fixed face coordinate gives a square (n-1)-variable
    system per face.  The tangent is oriented into the box; points whose
    tangent has no inward component are flagged grazing.
    """
    n = sys.nvars
    opts = solver_opts or SolverOptions()
    raw: list[tuple[np.ndarray, int, float]] = []
    for j in range(n):
        for side, val in ((+1, box.lower[j]), (-1, box.upper[j])):
            polys = [p.substitute(j, Fraction(float(val))) for p in sys.polys]
            if any(p.is_zero() for p in polys):
                if diagnostics is not None:
                    diagnostics.append(f"curve contains the face x_{j}={val}; skipped")
                continue
            if any(p.total_degree() == 0 for p in polys):
                continue  # constant nonzero: face misses the curve
            try:
                sol = solve_zero_dim(ZeroDimSystem(polys, box=None), seed + 13 * (2 * j + (side < 0)), opts)
            except Exception:
                continue
            for p in sol.points:
                q = np.insert(p, j, val)
                if not box.contains(q, tol=opts.box_tol * (1 + np.max(np.abs(q)))):
                    continue
                if sys.residual_inf(q) > 1e-9:
                    continue
                raw.append((q, j, float(side)))

    raw.sort(key=lambda item: tuple(item[0]))
    out: list[TracePoint] = []
    for q, j, inward in raw:
        if any(np.linalg.norm(q - tp.q) <= opts.dedup_radius * (1 + np.linalg.norm(q)) for tp in out):
            continue
        sigma, tangent = _sigma_at(sys, q)
        comp = tangent[j] * inward
        if comp < 0:
            tangent = -tangent
            comp = -comp
        grazing = bool(comp <= 1e-9)
        if grazing and diagnostics is not None:
            diagnostics.append(f"grazing boundary point at {q.tolist()}")
        out.append(TracePoint(q=q, v=tangent, s=sigma, c=0, grazing=grazing))
    return out


def shrink_box_off_singulars(box: Box, points: list[np.ndarray], factor: float = 1e-6) -> Box:
    """Shrink the box when a singular point sits (numerically) on its boundary."""
    if not points:
        return box
    margin = factor * box.widths
    needs = False
    for p in points:
        if np.any(np.abs(p - box.lower) <= margin) or np.any(np.abs(p - box.upper) <= margin):
            needs = True
            break
    return box.shrink(margin) if needs else box
