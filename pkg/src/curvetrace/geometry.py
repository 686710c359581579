"""Shared geometric objects: bounding boxes, trace start points, polygonal chains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Axis-aligned bounding box with positive width in every coordinate."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GeometryError("box bounds must be 1-d arrays of equal length")
        if not np.all(hi > lo):
            raise GeometryError("box must have positive width in every coordinate")

    @property
    def nvars(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def corner_radius(self) -> float:
        """Largest distance from the center to a corner."""
        return float(np.linalg.norm(0.5 * self.widths))

    def contains(self, q: np.ndarray, tol: float = 0.0) -> bool:
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def shrink(self, margin: np.ndarray) -> "Box":
        return Box(self.lower + margin, self.upper - margin)

    def clip_segment(self, q_in: np.ndarray, q_out: np.ndarray) -> np.ndarray:
        """Point where the segment from an inside point to an outside point crosses
        the boundary (linear interpolation; returns q_out if already inside)."""
        if self.contains(q_out):
            return q_out
        alpha = 1.0
        d = q_out - q_in
        for j in range(self.nvars):
            if d[j] > 0 and q_out[j] > self.upper[j]:
                alpha = min(alpha, (self.upper[j] - q_in[j]) / d[j])
            elif d[j] < 0 and q_out[j] < self.lower[j]:
                alpha = min(alpha, (self.lower[j] - q_in[j]) / d[j])
        alpha = max(alpha, 0.0)
        return q_in + alpha * d


@dataclass
class TracePoint:
    """Start/terminal object for tracing: point, direction, smallest singular
    value of the Jacobian there, and a visit counter."""

    q: np.ndarray
    v: np.ndarray
    s: float
    c: int = 0
    grazing: bool = False

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def copy(self) -> "TracePoint":
        return TracePoint(self.q.copy(), self.v.copy(), self.s, self.c, self.grazing)


# How a chain starts or ends.
KIND_FENCING = "fencing"
KIND_BOUNDARY = "boundary"
KIND_FRONT = "front"
KIND_CLOSURE = "closure"
KIND_STALLED = "stalled"


@dataclass
class Chain:
    """Ordered polyline of ambient-space points produced by the tracer."""

    vertices: list[np.ndarray] = field(default_factory=list)
    closed: bool = False
    start_kind: str = KIND_FENCING
    end_kind: str = KIND_STALLED

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def __len__(self) -> int:
        return len(self.vertices)
