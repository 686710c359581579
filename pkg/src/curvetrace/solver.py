"""Zero-dimensional polynomial system solving by total-degree homotopy
continuation with the gamma trick, plus real filtering, in-box selection
and deduplication.

The tracker is deliberately minimal: Euler predictor, Newton corrector,
adaptive step in t (halve on failure, grow on consecutive successes), no
endgame.  Paths whose step underflows near t=1 are counted as failed; their
endpoints are still polished with a patient Newton so that multiple roots
of key-point systems survive with small residuals (coordinates of such
roots are only linearly accurate and get merged downstream).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .geometry import Box
from .numeric import refine_root_square
from .poly import CompiledSystem, Polynomial


class SolverError(RuntimeError):
    pass


class TotalDegreeCapError(SolverError):
    pass


class RefinementError(SolverError):
    pass


@dataclass(frozen=True)
class ZeroDimSystem:
    """Square polynomial system, optionally with an in-box filter."""

    polys: list[Polynomial]
    box: Box | None = None

    def __post_init__(self):
        if not self.polys:
            raise SolverError("empty system")
        nvars = self.polys[0].nvars
        if any(p.nvars != nvars for p in self.polys):
            raise SolverError("inconsistent variable counts")
        if len(self.polys) != nvars:
            raise SolverError(f"system is not square: {len(self.polys)} equations in {nvars} variables")

    @property
    def nvars(self) -> int:
        return self.polys[0].nvars


@dataclass
class SolutionSet:
    points: list[np.ndarray]
    residuals: list[float]
    path_stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    total_degree_cap: int = 20000
    imag_tol: float = 1e-8
    dedup_radius: float = 1e-8
    box_tol: float = 1e-9
    dt_start: float = 0.05
    dt_max: float = 0.1
    dt_min: float = 1e-8
    max_steps: int = 2000
    divergence_norm: float = 1e8
    corrector_iters: int = 4
    patient_polish: bool = False
    threads: int | None = None


def _thread_count(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get("CURVETRACE_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _start_values_jac(x: np.ndarray, degrees: np.ndarray):
    vals = x**degrees - 1.0
    jac = np.diag(degrees * x ** (degrees - 1))
    return vals, jac


def _track_path(compiled: CompiledSystem, degrees: np.ndarray, x0: np.ndarray, gamma: complex, opts: SolverOptions):
    """Track one gamma-trick path from t=0 to t=1.

    Returns (status, endpoint) with status in ok / diverged / underflow / maxsteps.
    """
    x = x0.astype(complex)
    t = 0.0
    dt = opts.dt_start
    consec = 0
    for _ in range(opts.max_steps):
        if t >= 1.0:
            return "ok", x
        dt = min(dt, 1.0 - t)
        fv, fj = compiled.values_and_jacobian(x)
        gv, gj = _start_values_jac(x, degrees)
        hx = (1.0 - t) * gamma * gj + t * fj
        ht = fv - gamma * gv
        ok = True
        try:
            dx = np.linalg.solve(hx, -ht)
            x_new = x + dt * dx
        except np.linalg.LinAlgError:
            ok = False
            x_new = x
        t_new = t + dt
        if ok:
            ok, x_new = _correct(compiled, degrees, gamma, x_new, t_new, opts)
        if ok:
            x, t = x_new, t_new
            consec += 1
            if consec >= 3:
                dt = min(dt * 1.5, opts.dt_max)
                consec = 0
            if np.linalg.norm(x) > opts.divergence_norm:
                return "diverged", x
        else:
            consec = 0
            dt *= 0.5
            if dt < opts.dt_min:
                return "underflow", x
    return "maxsteps", x


def _correct(compiled, degrees, gamma, x, t, opts):
    for _ in range(opts.corrector_iters):
        fv, fj = compiled.values_and_jacobian(x)
        gv, gj = _start_values_jac(x, degrees)
        hv = (1.0 - t) * gamma * gv + t * fv
        hx = (1.0 - t) * gamma * gj + t * fj
        try:
            delta = np.linalg.solve(hx, hv)
        except np.linalg.LinAlgError:
            return False, x
        x = x - delta
        if not np.all(np.isfinite(x)):
            return False, x
        if np.linalg.norm(delta) <= 1e-9 * (1.0 + np.linalg.norm(x)):
            return True, x
    return False, x


def solve_zero_dim(sys: ZeroDimSystem, seed: int, opts: SolverOptions | None = None) -> SolutionSet:
    """All real in-box solutions of a square system via total-degree homotopy.

    Deterministic for a fixed seed: gamma comes from a seeded generator,
    start points are enumerated in a fixed order, and results are sorted
    lexicographically before deduplication.
    """
    opts = opts or SolverOptions()
    degrees = [p.total_degree() for p in sys.polys]
    if any(d == 0 for d in degrees):
        # constant equations: a nonzero constant kills all solutions, a zero
        # constant makes the system non-zero-dimensional
        if any(d == 0 and not p.is_zero() for d, p in zip(degrees, sys.polys)):
            return SolutionSet([], [], {"tracked": 0, "diverged": 0, "failed": 0, "warnings": []})
        raise SolverError("system contains an identically zero equation")
    total = math.prod(degrees)
    if total > opts.total_degree_cap:
        raise TotalDegreeCapError(f"total degree {total} exceeds cap {opts.total_degree_cap}")

    rng = np.random.default_rng(seed)
    gamma = np.exp(2j * np.pi * rng.random())
    compiled = CompiledSystem(sys.polys, with_jacobian=True)
    deg_arr = np.array(degrees, dtype=float)

    starts = []
    for combo in product(*[range(d) for d in degrees]):
        starts.append(np.exp(2j * np.pi * np.array(combo) / deg_arr))

    def run(x0):
        return _track_path(compiled, deg_arr, x0, gamma, opts)

    workers = _thread_count(opts.threads)
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(run, starts))
    else:
        raw = [run(x0) for x0 in starts]

    stats = {
        "tracked": total,
        "diverged": sum(1 for s, _ in raw if s == "diverged"),
        "failed": sum(1 for s, _ in raw if s in ("underflow", "maxsteps")),
        "warnings": [],
    }
    if stats["failed"] > 0.2 * total:
        stats["warnings"].append(f"{stats['failed']} of {total} paths failed step-size underflow")

    # endpoint polish in complex arithmetic
    def cplx_eval(x):
        return compiled.values_and_jacobian(x)

    candidates = []
    for status, x in raw:
        if status == "diverged" or not np.all(np.isfinite(x)):
            continue
        patient = opts.patient_polish and status != "ok"
        q, res, _ = refine_root_square(cplx_eval, x, opts.tol, max_iter=400 if patient else 50,
                                       patient=patient)
        if res <= opts.tol * 100 or (opts.patient_polish and res <= 1e-6):
            candidates.append(q)

    # real filter, real re-polish, box filter
    real_points = []
    for q in candidates:
        scale = 1.0 + np.linalg.norm(q.real)
        if np.max(np.abs(q.imag)) > opts.imag_tol * scale:
            continue
        xr = q.real.copy()
        xr, res, _ = refine_root_square(cplx_eval, xr, opts.tol,
                                        max_iter=400 if opts.patient_polish else 30,
                                        patient=opts.patient_polish)
        res = float(np.max(np.abs(compiled.values(xr))))
        if res > opts.tol:
            continue
        if sys.box is not None and not sys.box.contains(xr, tol=opts.box_tol):
            continue
        real_points.append(xr)

    real_points.sort(key=lambda p: tuple(p))
    kept, residuals = [], []
    for p in real_points:
        radius = opts.dedup_radius * (1.0 + np.linalg.norm(p))
        if any(np.linalg.norm(p - k) <= radius for k in kept):
            continue
        kept.append(p)
        residuals.append(float(np.max(np.abs(compiled.values(p)))))
    stats["returned"] = len(kept)
    return SolutionSet(kept, residuals, stats)


def refine_root(sys: ZeroDimSystem, q: np.ndarray, tol: float, max_iter: int = 30) -> np.ndarray:
    """Plain Newton polish of a single root of a square system.

    Raises RefinementError on divergence or a singular Jacobian
    (condition estimate above 1e12).
    """
    compiled = CompiledSystem(sys.polys, with_jacobian=True)
    q = np.asarray(q, dtype=float).copy()
    if not np.all(np.isfinite(q)):
        raise RefinementError("non-finite seed")
    q0 = q.copy()
    for _ in range(max_iter):
        vals, jac = compiled.values_and_jacobian(q)
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= 0 or sv[0] / sv[-1] > 1e12:
            raise RefinementError("singular Jacobian")
        if np.max(np.abs(vals)) <= tol:
            return q
        q = q - np.linalg.solve(jac, vals)
        if not np.all(np.isfinite(q)) or np.linalg.norm(q - q0) > 1e6 * (1 + np.linalg.norm(q0)):
            raise RefinementError("diverged")
    vals = compiled.values(q)
    if np.max(np.abs(vals)) <= tol:
        return q
    raise RefinementError("did not reach tolerance")


def dedup(points: list[np.ndarray], radius: float) -> list[np.ndarray]:
    """Greedy clustering: keep the first point, drop any later point within
    ``radius`` of a kept one."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    kept: list[np.ndarray] = []
    for p in points:
        p = np.asarray(p, dtype=float)
        if any(np.linalg.norm(p - k) <= radius for k in kept):
            continue
        kept.append(p)
    return kept
