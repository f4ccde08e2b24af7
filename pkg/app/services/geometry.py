from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.services.core_model import Point

# cross-product tolerance for collinearity
EPS = 1e-9


@dataclass(frozen=True, slots=True)
class Polygon:
    vertices: tuple[Point, ...]

    def __len__(self) -> int:
        return len(self.vertices)


def cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[Point]) -> Polygon:
    """Monotone-chain hull, counter-clockwise, collinear points dropped.

    One distinct point gives a one-vertex polygon, collinear input a two-vertex segment.
    """
    if len(points) == 0:
        raise ValueError("convex_hull needs at least one point")
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) <= 2:
        return Polygon(tuple(pts))

    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= EPS:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= EPS:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and hull[0] == hull[1]:
        hull = hull[:1]
    return Polygon(tuple(hull))


def polygon_area(poly: Polygon) -> float:
    v = poly.vertices
    if len(v) < 3:
        return 0.0
    s = 0.0
    for (x1, y1), (x2, y2) in zip(v, v[1:] + v[:1]):
        s += x1 * y2 - x2 * y1
    return abs(s) / 2.0


def hull_area(points: Sequence[Point]) -> float:
    return polygon_area(convex_hull(points))


def path_length(points: Sequence[Point] | np.ndarray) -> float:
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ValueError("path_length needs at least one point")
    if arr.shape[0] == 1:
        return 0.0
    steps = np.diff(arr, axis=0)
    return float(np.hypot(steps[:, 0], steps[:, 1]).sum())


def distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def nearest_opponent(target: Point, opponents: Sequence[Point]) -> tuple[int, float]:
    if len(opponents) != 5:
        raise ValueError(f"expected 5 opponents, got {len(opponents)}")
    best_i, best_d = 0, distance(target, opponents[0])
    for i in range(1, len(opponents)):
        d = distance(target, opponents[i])
        # strict comparison keeps the lowest index on ties
        if d < best_d:
            best_i, best_d = i, d
    return best_i, best_d
