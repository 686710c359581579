"""Dense linear algebra for curve tracing: the SVD tangent operator, the
Newton corrector on the tangent-augmented system, and the step-size and
chord-error formulas used by the robust stepping mode."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .poly import CurveSystem

COND_LIMIT = 1e12


class NewtonError(RuntimeError):
    """Corrector failure; ``reason`` is one of max_iter / singular / diverged."""

    def __init__(self, reason: str, point: np.ndarray | None = None):
        super().__init__(reason)
        self.reason = reason
        self.point = point


@dataclass(frozen=True)
class TangentFrame:
    """Smallest singular value of the Jacobian and a unit tangent vector."""

    sigma_min: float
    tangent: np.ndarray


def tangent_frame(jac_values: np.ndarray) -> TangentFrame:
    """Tangent direction and conditioning from an (n-1) x n Jacobian.

    Full SVD; the tangent is the last right-singular vector (the null
    direction), sigma_min the smallest singular value.  The tangent's sign
    is whatever the SVD returns; callers orient it.
    """
    jac = np.asarray(jac_values, dtype=float)
    if jac.ndim != 2 or jac.shape[0] + 1 != jac.shape[1]:
        raise ValueError(f"expected an (n-1) x n matrix, got {jac.shape}")
    if not np.all(np.isfinite(jac)):
        raise ValueError("non-finite Jacobian entries")
    _, s, vt = np.linalg.svd(jac, full_matrices=True)
    sigma = float(s[-1]) if len(s) else 0.0
    return TangentFrame(sigma_min=sigma, tangent=vt[-1])


@dataclass(frozen=True)
class NewtonResult:
    point: np.ndarray
    residual: float
    iterations: int
    frame: TangentFrame


def newton_correct(
    sys: CurveSystem,
    q0: np.ndarray,
    tangent: np.ndarray,
    tol: float,
    max_iter: int = 20,
) -> NewtonResult:
    """Project a predictor point back onto the curve.

    Iterates q -> q - [J(q); t(J(q))^T]^{-1} [F(q); 0], refreshing the
    tangent row from the SVD at every iterate so the correction stays in
    the hyperplane family orthogonal to the running tangent.  Stops when
    both the residual ||F||_inf and the last update are at most ``tol``.

    Raises NewtonError on max_iter, on an augmented condition estimate
    above 1e12 (near-singularity), or when iterates leave a ball of ten
    times the first update (divergence).
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    q = np.asarray(q0, dtype=float).copy()
    vals, jac = sys.values_and_jacobian(q)
    residual = float(np.max(np.abs(vals)))
    frame = tangent_frame(jac)
    _check_augmented(jac, frame, q)
    if residual <= tol:
        return NewtonResult(q, residual, 0, frame)
    radius_limit = None
    start = q.copy()
    for it in range(1, max_iter + 1):
        aug = np.vstack([jac, frame.tangent])
        rhs = np.concatenate([vals, [0.0]])
        try:
            delta = np.linalg.solve(aug, rhs)
        except np.linalg.LinAlgError:
            raise NewtonError("singular", q) from None
        q = q - delta
        step = float(np.linalg.norm(delta))
        if radius_limit is None:
            radius_limit = 10.0 * step + 1e-300
        if float(np.linalg.norm(q - start)) > radius_limit:
            raise NewtonError("diverged", q)
        vals, jac = sys.values_and_jacobian(q)
        residual = float(np.max(np.abs(vals)))
        frame = tangent_frame(jac)
        if residual <= tol and step <= tol:
            return NewtonResult(q, residual, it, frame)
        _check_augmented(jac, frame, q)
    raise NewtonError("max_iter", q)


def _check_augmented(jac: np.ndarray, frame: TangentFrame, q: np.ndarray) -> None:
    aug = np.vstack([jac, frame.tangent])
    sv = np.linalg.svd(aug, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > COND_LIMIT:
        raise NewtonError("singular", q)


# ----------------------------------------------------------------------
# step-size and error formulas


def omega(rho: float) -> float:
    """Jump-criterion factor sqrt(2(2r-1)(2r - 2 sqrt(r(r-1)) - 1)).

    Monotone decreasing with limit 1 as rho grows.
    """
    if rho < 1.0:
        raise ValueError("rho must be at least 1")
    return math.sqrt(2.0 * (2.0 * rho - 1.0) * (2.0 * rho - 2.0 * math.sqrt(rho * (rho - 1.0)) - 1.0))


def mu_factor(n: int) -> float:
    return math.sqrt(n * (n - 1))


def robust_step(sigma: float, n: int, rho: float) -> float:
    """Certified step length sigma / (2 mu rho), mu = sqrt(n(n-1)).

    A zero sigma yields step 0, which callers treat as "stop: singular".
    """
    if sigma < 0 or n < 2 or rho < 1.6:
        raise ValueError("need sigma >= 0, n >= 2, rho >= 1.6")
    return sigma / (2.0 * mu_factor(n) * rho)


def jump_check(z0: np.ndarray, z1: np.ndarray, s: float, rho: float) -> bool:
    """True iff the corrected point is certified on the same component:
    ||z1 - z0|| < omega(rho) * s."""
    if s <= 0 or rho < 1.6:
        raise ValueError("need s > 0 and rho >= 1.6")
    return float(np.linalg.norm(np.asarray(z1) - np.asarray(z0))) < omega(rho) * s


def chord_error_bound(sigma_tilde: float, n: int, rho_star: float, tau: float) -> float:
    """Hausdorff bound between a curve segment and its chord:

        tan(2 arccos(1/omega)) * omega/(4 mu rho*) * (mu tau + sigma~) + tau

    At rho* = 1.6 this is at most 1.082 tau + 0.082 sigma~/mu.
    """
    if rho_star < 1.6 or tau < 0 or sigma_tilde < 0:
        raise ValueError("need rho* >= 1.6, tau >= 0, sigma~ >= 0")
    w = omega(rho_star)
    if w < 1.0:
        raise AssertionError("omega below 1 cannot occur for rho >= 1.6")
    mu = mu_factor(n)
    theta = math.acos(1.0 / w)
    return math.tan(2.0 * theta) * w / (4.0 * mu * rho_star) * (mu * tau + sigma_tilde) + tau


def refine_root_square(
    values_and_jacobian,
    q0: np.ndarray,
    tol: float,
    max_iter: int = 30,
    patient: bool = False,
) -> tuple[np.ndarray, float, bool]:
    """Plain Newton on a square system given an eval callback.

    Returns (best point, best residual, converged).  Works in real or complex
    arithmetic depending on the seed's dtype.  ``patient`` mode keeps
    iterating with backtracking well past the usual budget and keeps the
    best iterate seen; multiple roots then still converge, just linearly.
    """
    q = np.array(q0).copy()
    limit = max_iter
    vals, jac = values_and_jacobian(q)
    best_q, best_res = q.copy(), float(np.max(np.abs(vals)))
    stale = 0
    for _ in range(limit):
        if best_res <= tol and not patient:
            return best_q, best_res, True
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[-1] <= 0 or sv[0] / max(sv[-1], 1e-300) > COND_LIMIT:
            if not patient:
                return best_q, best_res, best_res <= tol
            # damped pseudo-inverse step keeps multiple-root refinement moving
            delta = np.linalg.lstsq(jac, vals, rcond=None)[0]
        else:
            delta = np.linalg.solve(jac, vals)
        step = 1.0
        improved = False
        for _ in range(5):
            q_new = q - step * delta
            vals_new, jac_new = values_and_jacobian(q_new)
            res_new = float(np.max(np.abs(vals_new)))
            if res_new < best_res or not patient:
                q, vals, jac = q_new, vals_new, jac_new
                if res_new < best_res:
                    best_q, best_res = q.copy(), res_new
                    improved = True
                break
            step *= 0.5
        else:
            q, vals, jac = q_new, vals_new, jac_new
        if not np.all(np.isfinite(q)) or np.linalg.norm(q - q0) > 1e6:
            break
        stale = 0 if improved else stale + 1
        # multiple roots reach tiny residuals long before the coordinates
        # settle, so patient mode only stops once progress genuinely stalls
        if patient and (stale > 40 or best_res == 0.0):
            break
    return best_q, best_res, best_res <= tol
