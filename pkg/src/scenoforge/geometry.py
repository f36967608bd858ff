"""Planar geometry helpers shared by the compiler, simulator and renderer.

Headings are in degrees, counter-clockwise from the +x axis (east), in [0, 360).
"""
from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence


class Point(NamedTuple):
    x: float
    y: float


def dist(a: Point, b: Point) -> float:
    return math.hypot(b.x - a.x, b.y - a.y)


def polyline_length(pts: Sequence[Point]) -> float:
    return math.fsum(dist(a, b) for a, b in zip(pts, pts[1:]))


def heading(a: Point, b: Point) -> float:
    return math.degrees(math.atan2(b.y - a.y, b.x - a.x)) % 360.0


def signed_delta(from_deg: float, to_deg: float) -> float:
    """Signed difference to - from normalized into (-180, 180]."""
    d = (to_deg - from_deg) % 360.0
    if d > 180.0:
        d -= 360.0
    return d


def start_heading(pts: Sequence[Point]) -> float:
    for a, b in zip(pts, pts[1:]):
        if dist(a, b) > 0:
            return heading(a, b)
    return 0.0


def end_heading(pts: Sequence[Point]) -> float:
    for a, b in zip(reversed(pts[:-1]), reversed(pts[1:])):
        if dist(a, b) > 0:
            return heading(a, b)
    return 0.0


def _right_normal(a: Point, b: Point) -> tuple[float, float]:
    d = dist(a, b)
    if d == 0:
        return (0.0, 0.0)
    return ((b.y - a.y) / d, -(b.x - a.x) / d)


def offset_polyline(pts: Sequence[Point], offset: float) -> list[Point]:
    """Shift a polyline sideways; positive offsets go to the right of travel.

    Interior vertices use the miter point so that each segment stays exactly
    ``offset`` away from its source segment.
    """
    pts = [p for i, p in enumerate(pts) if i == 0 or dist(pts[i - 1], p) > 0]
    if len(pts) < 2:
        raise ValueError("polyline needs at least two distinct points")
    normals = [_right_normal(a, b) for a, b in zip(pts, pts[1:])]
    out = []
    for i, p in enumerate(pts):
        if i == 0:
            nx, ny = normals[0]
            scale = offset
        elif i == len(pts) - 1:
            nx, ny = normals[-1]
            scale = offset
        else:
            n1, n2 = normals[i - 1], normals[i]
            mx, my = n1[0] + n2[0], n1[1] + n2[1]
            m = math.hypot(mx, my)
            if m < 1e-9:
                nx, ny = n1
                scale = offset
            else:
                nx, ny = mx / m, my / m
                scale = offset / (nx * n1[0] + ny * n1[1])
        out.append(Point(p.x + nx * scale, p.y + ny * scale))
    return out


def point_at(pts: Sequence[Point], s: float) -> Point:
    """Point at arc length ``s`` (clamped to the polyline)."""
    if s <= 0:
        return pts[0]
    acc = 0.0
    for a, b in zip(pts, pts[1:]):
        seg = dist(a, b)
        if acc + seg >= s and seg > 0:
            t = (s - acc) / seg
            return Point(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        acc += seg
    return pts[-1]


def cumulative_turn(pts: Sequence[Point]) -> float:
    """Signed turn (deg) with the largest magnitude reached along the polyline."""
    heads = [heading(a, b) for a, b in zip(pts, pts[1:]) if dist(a, b) > 0]
    best = 0.0
    total = 0.0
    for h0, h1 in zip(heads, heads[1:]):
        total += signed_delta(h0, h1)
        if abs(total) > abs(best):
            best = total
    return best


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def convex_hull(points: Iterable[Point]) -> list[Point]:
    """Counter-clockwise hull (monotone chain), without the closing point."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def expanded_hull(points: Iterable[Point], margin: float) -> list[Point]:
    """Closed hull of the points grown by ``margin`` (octagonal approximation)."""
    grown = []
    for p in points:
        for k in range(8):
            a = math.radians(45.0 * k)
            grown.append(Point(p.x + margin * math.cos(a), p.y + margin * math.sin(a)))
    hull = convex_hull(grown)
    if not hull:
        return []
    return hull + [hull[0]]


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point, eps: float = 1e-9) -> bool:
    """True when the closed segments share at least one point."""
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True

    def on_seg(a: Point, b: Point, c: Point, d: float) -> bool:
        return abs(d) <= eps and min(a.x, b.x) - eps <= c.x <= max(a.x, b.x) + eps and \
            min(a.y, b.y) - eps <= c.y <= max(a.y, b.y) + eps

    return (on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2)
            or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4))


def compass(deg: float) -> str:
    """Eight-point compass label for a math-convention heading."""
    bearing = (90.0 - deg) % 360.0
    names = ["north", "northeast", "east", "southeast", "south", "southwest", "west", "northwest"]
    return names[int(((bearing + 22.5) % 360.0) // 45.0)]
