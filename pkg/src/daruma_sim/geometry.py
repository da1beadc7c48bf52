"""Planar geometry: oriented rectangles, polygons and route polylines."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .types import Point, Pose2D, Trajectory, normalize_angle, pose_at

EPS = 1e-9


@dataclass(frozen=True)
class OrientedRect:
    center: Pose2D
    dims: tuple[float, float]  # (length along heading, width)

    def __post_init__(self) -> None:
        if not (self.dims[0] > 0 and self.dims[1] > 0):
            raise ValueError(f"rect dims must be > 0, got {self.dims}")

    def corners(self) -> list[Point]:
        c, s = math.cos(self.center.heading), math.sin(self.center.heading)
        hl, hw = self.dims[0] / 2.0, self.dims[1] / 2.0
        x, y = self.center.x, self.center.y
        return [
            (x + c * hl - s * hw, y + s * hl + c * hw),
            (x - c * hl - s * hw, y - s * hl + c * hw),
            (x - c * hl + s * hw, y - s * hl - c * hw),
            (x + c * hl + s * hw, y + s * hl - c * hw),
        ]

    def axes(self) -> list[Point]:
        c, s = math.cos(self.center.heading), math.sin(self.center.heading)
        return [(c, s), (-s, c)]


def footprint_at(traj: Trajectory, dims: tuple[float, float], t: float) -> OrientedRect:
    pose, _ = pose_at(traj, t)
    return OrientedRect(pose, dims)


def _project(corners: Sequence[Point], axis: Point) -> tuple[float, float]:
    dots = [px * axis[0] + py * axis[1] for px, py in corners]
    return min(dots), max(dots)


def rects_intersect(a: OrientedRect, b: OrientedRect) -> bool:
    """Separating-axis test over the two edge normals of each rectangle.

    Touching rectangles count as intersecting.
    """
    # cheap reject on bounding circles
    ra = 0.5 * math.hypot(*a.dims)
    rb = 0.5 * math.hypot(*b.dims)
    if math.hypot(a.center.x - b.center.x, a.center.y - b.center.y) > ra + rb + EPS:
        return False
    ca, cb = a.corners(), b.corners()
    for axis in a.axes() + b.axes():
        amin, amax = _project(ca, axis)
        bmin, bmax = _project(cb, axis)
        if amax < bmin - EPS or bmax < amin - EPS:
            return False
    return True


def polygon_area(poly: Sequence[Point]) -> float:
    """Signed shoelace area (positive for counter-clockwise)."""
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a: Point, b: Point, p: Point, tol: float = EPS) -> bool:
    seg_len = math.hypot(b[0] - a[0], b[1] - a[1])
    if seg_len == 0.0:
        return math.hypot(p[0] - a[0], p[1] - a[1]) <= tol
    if abs(_orient(a, b, p)) / seg_len > tol:
        return False
    return (
        min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol
        and min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol
    )


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    return (
        _on_segment(q1, q2, p1, 0.0)
        or _on_segment(q1, q2, p2, 0.0)
        or _on_segment(p1, p2, q1, 0.0)
        or _on_segment(p1, p2, q2, 0.0)
    )


def polygon_is_simple(poly: Sequence[Point]) -> bool:
    """True when no two non-adjacent edges touch and no vertex repeats."""
    n = len(poly)
    if n < 3:
        return False
    if len(set(poly)) != n:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def point_in_polygon(p: Point, poly: Sequence[Point]) -> bool:
    """Even-odd containment with the boundary counted as inside."""
    n = len(poly)
    x, y = p
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = poly[i]
        xj, yj = poly[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    if inside:
        return True
    # only points the ray test rejects need the boundary check
    return any(_on_segment(poly[i], poly[(i + 1) % n], p) for i in range(n))


def points_in_polygon(pts: np.ndarray, poly: Sequence[Point], tol: float = EPS) -> np.ndarray:
    """Vectorised :func:`point_in_polygon` over an (m, 2) array."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0:1], pts[:, 1:2]
    v = np.asarray(poly, dtype=float)
    a, b = v, np.roll(v, -1, axis=0)
    xi, yi, xj, yj = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    straddle = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
    inside = np.count_nonzero(straddle & (x < x_cross), axis=1) % 2 == 1
    ex, ey = xj - xi, yj - yi
    seg = np.hypot(ex, ey)
    cross = ex * (y - yi) - ey * (x - xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        near_line = np.where(seg > 0, np.abs(cross) / seg, np.hypot(x - xi, y - yi)) <= tol
    in_box = (
        (np.minimum(xi, xj) - tol <= x) & (x <= np.maximum(xi, xj) + tol)
        & (np.minimum(yi, yj) - tol <= y) & (y <= np.maximum(yi, yj) + tol)
    )
    on_edge = np.any(near_line & in_box, axis=1)
    return inside | on_edge


def rect_inside_polygon(rect: OrientedRect, poly: Sequence[Point]) -> bool:
    return all(point_in_polygon(c, poly) for c in rect.corners())


def scale_polygon(poly: Sequence[Point], factor: float) -> tuple[Point, ...]:
    cx = sum(p[0] for p in poly) / len(poly)
    cy = sum(p[1] for p in poly) / len(poly)
    return tuple((cx + factor * (x - cx), cy + factor * (y - cy)) for x, y in poly)


class Route:
    """Arc-length parameterised polyline; extrapolates linearly past both ends."""

    def __init__(self, points: Sequence[Point]) -> None:
        pts = [(float(x), float(y)) for x, y in points]
        dedup = [pts[0]]
        for p in pts[1:]:
            if math.hypot(p[0] - dedup[-1][0], p[1] - dedup[-1][1]) > EPS:
                dedup.append(p)
        if len(dedup) < 2:
            raise ValueError("route needs at least 2 distinct points")
        self.points: tuple[Point, ...] = tuple(dedup)
        self.cum: list[float] = [0.0]
        for a, b in zip(self.points, self.points[1:]):
            self.cum.append(self.cum[-1] + math.hypot(b[0] - a[0], b[1] - a[1]))

    @property
    def length(self) -> float:
        return self.cum[-1]

    def _segment(self, i: int) -> tuple[Point, Point, float]:
        a, b = self.points[i], self.points[i + 1]
        return a, b, self.cum[i + 1] - self.cum[i]

    def project(self, x: float, y: float) -> tuple[float, float]:
        """(arc length, signed lateral offset; left of travel positive)."""
        best: Optional[tuple[float, float, float]] = None
        last = len(self.points) - 2
        for i in range(last + 1):
            a, b, seg = self._segment(i)
            ux, uy = (b[0] - a[0]) / seg, (b[1] - a[1]) / seg
            dx, dy = x - a[0], y - a[1]
            along = dx * ux + dy * uy
            lo = -math.inf if i == 0 else 0.0
            hi = math.inf if i == last else seg
            along_c = min(max(along, lo), hi)
            px, py = a[0] + ux * along_c, a[1] + uy * along_c
            dist = math.hypot(x - px, y - py)
            lateral = ux * dy - uy * dx
            if along_c != along:
                # closest point is a vertex: keep the sign from this segment
                lateral = math.copysign(dist, lateral) if dist > 0 else 0.0
            if best is None or dist < best[0] - 1e-12:
                best = (dist, self.cum[i] + along_c, lateral)
        assert best is not None
        return best[1], best[2]

    def point_at(self, s: float) -> tuple[float, float, float]:
        """(x, y, heading) at arc length ``s``."""
        last = len(self.points) - 2
        i = bisect.bisect_right(self.cum, s) - 1
        i = min(max(i, 0), last)
        a, b, seg = self._segment(i)
        ux, uy = (b[0] - a[0]) / seg, (b[1] - a[1]) / seg
        d = s - self.cum[i]
        return a[0] + ux * d, a[1] + uy * d, math.atan2(uy, ux)

    def offset_point(self, s: float, lateral: float) -> tuple[float, float, float]:
        x, y, h = self.point_at(s)
        return x - math.sin(h) * lateral, y + math.cos(h) * lateral, h

    def offset_points(self, s: np.ndarray, lateral: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`offset_point`; returns an (n, 2) array of positions."""
        s = np.asarray(s, dtype=float)
        cum = np.asarray(self.cum)
        pts = np.asarray(self.points)
        i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2)
        a, b = pts[i], pts[i + 1]
        u = (b - a) / (cum[i + 1] - cum[i])[:, None]
        d = (s - cum[i])[:, None]
        normal = np.stack([-u[:, 1], u[:, 0]], axis=1)
        return a + u * d + normal * np.asarray(lateral, dtype=float)[:, None]

    def crossing_s(self, p: Point, q: Point) -> Optional[float]:
        """Smallest arc length where the route (within its extent) meets segment pq."""
        hits = []
        for i in range(len(self.points) - 1):
            a, b, seg = self._segment(i)
            if not segments_intersect(a, b, p, q):
                continue
            rx, ry = b[0] - a[0], b[1] - a[1]
            sx, sy = q[0] - p[0], q[1] - p[1]
            denom = rx * sy - ry * sx
            if abs(denom) < EPS:
                u = ((p[0] - a[0]) * rx + (p[1] - a[1]) * ry) / (seg * seg)
            else:
                u = ((p[0] - a[0]) * sy - (p[1] - a[1]) * sx) / denom
            hits.append(self.cum[i] + min(max(u, 0.0), 1.0) * seg)
        return min(hits) if hits else None


def heading_between(p: Point, q: Point, fallback: float) -> float:
    dx, dy = q[0] - p[0], q[1] - p[1]
    if math.hypot(dx, dy) < 1e-6:
        return normalize_angle(fallback)
    return math.atan2(dy, dx)
