"""Grouping of singular (or pseudo-singular) points into natural clusters.

A cluster of radius r around a center z is *natural* when the disks D(z, r)
and D(z, 3r) contain exactly the same input points; associated disks of
distinct natural clusters are then disjoint and their centers at least 3r
apart.  The final radius is the delta used for fencing spheres and the
tracer's step bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Cluster:
    center: np.ndarray
    members: list[np.ndarray]
    radius: float


def _attempt(points: list[np.ndarray], order: list[int], r: float) -> list[Cluster] | None:
    """Greedy clustering at radius r; None when any natural-cluster condition fails."""
    assigned = [False] * len(points)
    clusters: list[Cluster] = []
    for seed in order:
        if assigned[seed]:
            continue
        members_idx = [
            i for i in range(len(points))
            if not assigned[i] and np.linalg.norm(points[i] - points[seed]) <= r
        ]
        for i in members_idx:
            assigned[i] = True
        members = [points[i] for i in members_idx]
        center = np.mean(members, axis=0)
        clusters.append(Cluster(center=center, members=members, radius=r))

    for cl in clusters:
        if any(np.linalg.norm(m - cl.center) > r for m in cl.members):
            return None
        # D(center, 3r) must contain exactly the members
        inside_3r = sum(1 for p in points if np.linalg.norm(p - cl.center) <= 3.0 * r)
        if inside_3r != len(cl.members):
            return None
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            if np.linalg.norm(clusters[i].center - clusters[j].center) < 3.0 * r:
                return None
    return clusters


def natural_clusters(points: list[np.ndarray], r0: float) -> tuple[list[Cluster], float]:
    """Partition points into natural clusters, halving the radius until the
    disk conditions hold.  Returns the clusters and the final radius delta.

    Terminates because any radius below a third of the minimal pairwise
    distance makes every point a singleton cluster.  Empty input returns
    ([], r0); a single point is one cluster at r0.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    pts = [np.asarray(p, dtype=float) for p in points]
    if not pts:
        return [], r0
    if len(pts) == 1:
        return [Cluster(center=pts[0].copy(), members=[pts[0]], radius=r0)], r0

    # near-identical points (possible from pseudo-singular unions) would make
    # the halving loop spin; merge them up front
    merged: list[np.ndarray] = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= 1e-12 * (1 + np.linalg.norm(p)) for q in merged):
            merged.append(p)
    pts = merged
    if len(pts) == 1:
        return [Cluster(center=pts[0].copy(), members=[pts[0]], radius=r0)], r0

    # sort ascending by nearest-neighbor distance so tight groups seed first
    nn = []
    for i, p in enumerate(pts):
        nn.append(min(np.linalg.norm(p - q) for j, q in enumerate(pts) if j != i))
    order = sorted(range(len(pts)), key=lambda i: (nn[i], tuple(pts[i])))

    r = r0
    while True:
        clusters = _attempt(pts, order, r)
        if clusters is not None:
            return clusters, r
        r *= 0.5
