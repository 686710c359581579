"""Curve-following engine: predictor-corrector tracing with visit-counter
jump detection, try/resume/boundary passes and closed-oval tracing.

Start objects carry (q, v, s, c): point, direction, smallest singular value,
and a visit counter.  Each start is visited at most once; a counter that
would exceed one signals a possible curve jump and is reported, not fatal.
A try-pass chain additionally stops when the smallest singular value starts
dropping (the trace is approaching a singular region) and parks a front
point there for the resume pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    KIND_BOUNDARY,
    KIND_CLOSURE,
    KIND_FENCING,
    KIND_FRONT,
    KIND_STALLED,
    Box,
    Chain,
    TracePoint,
)
from .numeric import NewtonError, jump_check, mu_factor, newton_correct, robust_step
from .poly import CurveSystem

TAG_TRY = "try"
TAG_RESUME = "resume"
TAG_BOUNDARY = "boundary"

_START_KIND = {TAG_TRY: KIND_FENCING, TAG_RESUME: KIND_FRONT, TAG_BOUNDARY: KIND_BOUNDARY}
_OTHER_KIND = {TAG_TRY: KIND_BOUNDARY, TAG_RESUME: KIND_BOUNDARY, TAG_BOUNDARY: KIND_FENCING}


@dataclass
class TraceConfig:
    mode: str = "practical"  # practical | robust
    rho: float = 1.6
    corrector_tol: float = 1e-10
    h_min: float = 1e-7
    newton_max_iter: int = 20
    max_steps: int = 50_000
    fixed_step: float | None = None  # overrides all step adaptation (jump experiments)
    drop_rule: str = "hysteresis"  # hysteresis | literal
    drop_factor: float = 0.99
    drop_persist: int = 2
    seg_tol_factor: float = 0.05
    seg_tol_rel: float = 0.05


@dataclass
class TraceResult:
    chains: list[Chain] = field(default_factory=list)
    front: list[TracePoint] = field(default_factory=list)
    reports: list[tuple[np.ndarray, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


# ----------------------------------------------------------------------
# segment membership


def _segment_distance(point: np.ndarray, a: np.ndarray, b: np.ndarray, tol_rel: float) -> float:
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        return float(np.linalg.norm(point - a))
    u = float((point - a) @ d) / denom
    if u < -tol_rel or u > 1.0 + tol_rel:
        return np.inf
    proj = a + min(max(u, 0.0), 1.0) * d
    return float(np.linalg.norm(point - proj))


def segment_hit(
    target: TracePoint,
    seg_start: np.ndarray,
    seg_end: np.ndarray,
    v_current: np.ndarray,
    tol: float,
    tol_rel: float = 0.05,
) -> bool:
    """True iff the target opposes the current direction and lies on the
    segment within tolerance (projection parameter within the relative slack)."""
    if float(target.v @ v_current) >= 0.0:
        return False
    return _segment_distance(target.q, seg_start, seg_end, tol_rel) <= tol


# ----------------------------------------------------------------------
# step control


@dataclass
class _StepState:
    mult: float = 1.0
    accepted_run: int = 0

    def reject(self):
        self.mult = max(self.mult * 0.5, 1e-12)
        self.accepted_run = 0

    def accept(self):
        self.accepted_run += 1
        if self.accepted_run >= 4:
            self.mult = min(1.0, self.mult * 1.25)
            self.accepted_run = 0


def step_control(sigma: float, nvars: int, delta: float, cfg: TraceConfig, state: _StepState) -> float:
    """Step length bounded by delta/2 and scaled by the smallest singular value.

    Practical mode uses kappa * sigma with kappa = 1/(2 mu rho); robust mode
    uses the certified step sigma/(2 mu rho) (same formula, but the caller
    additionally enforces the jump criterion after the step).  The history
    multiplier halves on rejection and recovers by 1.25x after four accepted
    steps.  A fixed_step override bypasses everything.
    """
    if cfg.fixed_step is not None:
        return cfg.fixed_step
    kappa = 1.0 / (2.0 * mu_factor(nvars) * cfg.rho)
    base = min(0.5 * delta, kappa * sigma) if sigma > 0 else 0.0
    h = base * state.mult
    return min(max(h, cfg.h_min), 0.5 * delta)


# ----------------------------------------------------------------------
# single-chain engine


class _ChainEnd(Exception):
    pass


def _consume_rwp(rwp: list[np.ndarray], a: np.ndarray, b: np.ndarray, tol: float, tol_rel: float,
                 skip: np.ndarray | None = None) -> None:
    keep = []
    for p in rwp:
        if skip is not None and p is skip:
            keep.append(p)
            continue
        if _segment_distance(p, a, b, tol_rel) <= tol:
            continue
        keep.append(p)
    rwp[:] = keep


def _attempt_step(sys, q_prev, v_prev, s_prev, delta, cfg, state):
    """One predictor-corrector step with rejection handling.

    Returns the NewtonResult or None when the chain stalls (step underflow
    or persistent corrector failure)."""
    rejections = 0
    while True:
        h = step_control(s_prev, sys.nvars, delta, cfg, state)
        if h <= 0:
            return None, 0.0
        q_pred = q_prev + h * v_prev
        try:
            res = newton_correct(sys, q_pred, v_prev, cfg.corrector_tol, cfg.newton_max_iter)
        except NewtonError:
            res = None
        if res is not None and cfg.mode == "robust":
            mu = mu_factor(sys.nvars)
            rho_eff = max(cfg.rho, s_prev / (2.0 * mu * h)) if s_prev > 0 else cfg.rho
            if not jump_check(q_prev, res.point, h, rho_eff):
                res = None
        if res is not None:
            state.accept()
            return res, h
        rejections += 1
        state.reject()
        if cfg.fixed_step is not None or rejections > 60:
            return None, h
        if step_control(s_prev, sys.nvars, delta, cfg, state) <= cfg.h_min * (1 + 1e-12) and rejections > 3:
            return None, h


def _trace_chain(
    sys: CurveSystem,
    box: Box,
    start: TracePoint,
    own_index: int,
    own_list: list[TracePoint],
    other_list: list[TracePoint],
    front: list[TracePoint] | None,
    rwp: list[np.ndarray],
    delta: float,
    tag: str,
    cfg: TraceConfig,
    result: TraceResult,
) -> Chain:
    chain = Chain(vertices=[start.q.copy()], start_kind=_START_KIND[tag], end_kind=KIND_STALLED)
    q = start.q.copy()
    v = start.v / np.linalg.norm(start.v)
    s = start.s
    tol_hit = max(2.0 * cfg.corrector_tol, cfg.seg_tol_factor * delta)
    state = _StepState()
    drop_run = 0

    for step_no in range(cfg.max_steps):
        if not box.contains(q, tol=1e-12):
            break
        s_prev, q_prev, v_prev = s, q, v
        res, _h = _attempt_step(sys, q_prev, v_prev, s_prev, delta, cfg, state)
        if res is None:
            chain.end_kind = KIND_STALLED
            result.warnings.append(
                f"chain stalled near {np.round(q_prev, 6).tolist()} (corrector failure below h_min)"
            )
            return chain
        q = res.point
        s = res.frame.sigma_min
        v = res.frame.tangent
        if float(v @ v_prev) < 0.0:
            v = -v
        if np.linalg.norm(q - q_prev) < 1e-15:
            chain.end_kind = KIND_STALLED
            result.warnings.append(f"chain made no progress near {np.round(q_prev, 6).tolist()}")
            return chain

        _consume_rwp(rwp, q_prev, q, tol_hit, cfg.seg_tol_rel)

        # terminal object on the latest segment: other list first, then own list
        for tp in other_list:
            if segment_hit(tp, q_prev, q, v, tol_hit, cfg.seg_tol_rel):
                if tp.c > 0:
                    result.reports.append(
                        (tp.q.copy(), f"{_OTHER_KIND[tag]} point visited again ({tag} pass)")
                    )
                else:
                    chain.vertices.append(tp.q.copy())
                tp.c += 1
                chain.end_kind = _OTHER_KIND[tag]
                return chain
        for i, tp in enumerate(own_list):
            if i == own_index:
                continue
            if segment_hit(tp, q_prev, q, v, tol_hit, cfg.seg_tol_rel):
                if tp.c > 0:
                    result.reports.append(
                        (tp.q.copy(), f"{_START_KIND[tag]} point visited again ({tag} pass)")
                    )
                elif tag in (TAG_TRY, TAG_RESUME):
                    chain.vertices.append(tp.q.copy())
                tp.c += 1
                chain.end_kind = _START_KIND[tag]
                return chain

        if tag == TAG_TRY and front is not None:
            hit = None
            for tp in front:
                if segment_hit(tp, q_prev, q, v, tol_hit, cfg.seg_tol_rel):
                    hit = tp
                    break
            if hit is not None:
                chain.vertices.append(hit.q.copy())
                front.remove(hit)
                chain.end_kind = KIND_FRONT
                return chain
            # singular value drop: park a front point and stop
            dropping = s < cfg.drop_factor * s_prev if cfg.drop_rule == "hysteresis" else s < s_prev
            drop_run = drop_run + 1 if dropping else 0
            if drop_run >= (cfg.drop_persist if cfg.drop_rule == "hysteresis" else 1):
                front.append(TracePoint(q=q.copy(), v=v.copy(), s=s, c=0))
                chain.end_kind = KIND_FRONT
                return chain

        # closed component not seeded by a witness point: self-closure guard
        if step_no > 2 and _segment_distance(start.q, q_prev, q, cfg.seg_tol_rel) <= tol_hit:
            chain.vertices.append(start.q.copy())
            chain.closed = True
            chain.end_kind = KIND_CLOSURE
            return chain

        if not box.contains(q):
            exit_point = box.clip_segment(q_prev, q)
            if np.linalg.norm(exit_point - q_prev) > 1e-15:
                chain.vertices.append(exit_point)
            chain.end_kind = KIND_BOUNDARY
            result.warnings.append(
                f"chain left the box at {np.round(exit_point, 6).tolist()} without meeting a boundary point"
            )
            return chain

        chain.vertices.append(q.copy())

    chain.end_kind = KIND_STALLED
    result.warnings.append("chain exceeded the step budget")
    return chain


# ----------------------------------------------------------------------
# public passes


def plot_main(
    sys: CurveSystem,
    box: Box,
    cwp: list[TracePoint],
    bwp: list[TracePoint],
    rwp: list[np.ndarray],
    delta: float,
    tag: str,
    cfg: TraceConfig | None = None,
) -> TraceResult:
    """Trace chains from each unvisited start object in ``cwp``.

    ``tag`` selects the pass: 'try' stops on singular-value drop and emits
    front points, 'resume' continues from front points, 'boundary' walks the
    remaining boundary points.  ``bwp`` is the complementary terminal list
    (boundary points in try/resume, fencing points in the boundary pass).
    ``rwp`` is consumed in place as segments sweep over witness points.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if tag not in (TAG_TRY, TAG_RESUME, TAG_BOUNDARY):
        raise ValueError(f"unknown tag {tag!r}")
    cfg = cfg or TraceConfig()
    result = TraceResult()
    for j, start in enumerate(cwp):
        if start.c > 0:
            continue
        start.c = 1
        chain = _trace_chain(
            sys, box, start, j, cwp, bwp, result.front if tag == TAG_TRY else None,
            rwp, delta, tag, cfg, result,
        )
        result.chains.append(chain)
    return result


def plot_oval(
    sys: CurveSystem,
    box: Box,
    rwp: list[np.ndarray],
    wp: list[TracePoint],
    delta: float,
    cfg: TraceConfig | None = None,
) -> TraceResult:
    """Trace closed components from the remaining witness points.

    Pops witness points one at a time, traces until the start point lies on
    the current segment (closure), consuming any other witness point swept
    over.  Crossing a fencing or boundary object increments its counter and
    reports a jump when it was already visited: witness points should only
    ride closed components.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    cfg = cfg or TraceConfig()
    result = TraceResult()
    tol_rel = cfg.seg_tol_rel
    queue = sorted((np.asarray(p, dtype=float) for p in rwp), key=lambda p: tuple(p))
    rwp[:] = queue
    while rwp:
        p = rwp.pop(0)
        try:
            frame_sigma, tangent = _oval_start_frame(sys, p)
        except Exception:
            result.warnings.append(f"could not start oval trace at {np.round(p, 6).tolist()}")
            continue
        chain = Chain(vertices=[p.copy()], start_kind=KIND_CLOSURE, end_kind=KIND_STALLED)
        q, v, s = p.copy(), tangent, frame_sigma
        tol_hit = max(2.0 * cfg.corrector_tol, cfg.seg_tol_factor * delta)
        state = _StepState()
        k = 0
        while k < cfg.max_steps:
            if not box.contains(q, tol=1e-12):
                break
            k += 1
            s_prev, q_prev, v_prev = s, q, v
            res, _h = _attempt_step(sys, q_prev, v_prev, s_prev, delta, cfg, state)
            if res is None:
                chain.end_kind = KIND_STALLED
                result.warnings.append(f"oval chain stalled near {np.round(q_prev, 6).tolist()}")
                break
            q, s, v = res.point, res.frame.sigma_min, res.frame.tangent
            if float(v @ v_prev) < 0.0:
                v = -v
            if k > 2 and _segment_distance(p, q_prev, q, tol_rel) <= tol_hit:
                chain.vertices.append(p.copy())
                chain.closed = True
                chain.end_kind = KIND_CLOSURE
                break
            _consume_rwp(rwp, q_prev, q, tol_hit, tol_rel)
            hit = False
            for tp in wp:
                if segment_hit(tp, q_prev, q, v, tol_hit, tol_rel):
                    if tp.c > 0:
                        result.reports.append(
                            (tp.q.copy(), "visited point crossed by an oval trace")
                        )
                    tp.c += 1
                    hit = True
                    chain.end_kind = KIND_BOUNDARY
                    break
            if hit:
                break
            if not box.contains(q):
                exit_point = box.clip_segment(q_prev, q)
                if np.linalg.norm(exit_point - q_prev) > 1e-15:
                    chain.vertices.append(exit_point)
                chain.end_kind = KIND_BOUNDARY
                result.warnings.append(
                    f"oval trace left the box at {np.round(exit_point, 6).tolist()}"
                )
                break
            chain.vertices.append(q.copy())
        else:
            result.warnings.append("oval chain exceeded the step budget")
        result.chains.append(chain)
    return result


def _oval_start_frame(sys: CurveSystem, p: np.ndarray):
    from .numeric import tangent_frame

    frame = tangent_frame(sys.jacobian_at(p))
    v = frame.tangent
    idx = int(np.argmax(np.abs(v)))
    if v[idx] < 0:
        v = -v
    return frame.sigma_min, v
