"""Fast-marching solution of ``|grad S| = c`` and steepest-descent rays."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from skimage.measure import find_contours

from ._backend import kernels
from .errors import ConvergenceError, DomainError, ParameterError
from .field import FieldKind, GridSpec, ScalarField2D, Trajectory, as_point, line_integral


def _cell_corners(spec: GridSpec, x: float, y: float):
    i = min(max(int(math.floor((x - spec.x_min) / spec.h)), 0), spec.nx - 2)
    j = min(max(int(math.floor((y - spec.y_min) / spec.h)), 0), spec.ny - 2)
    return [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]


def _seed_cell(spec: GridSpec, cost: ScalarField2D, p, dist_fn):
    """Seed the four nodes around ``p`` with local cost times exact distance."""
    T0 = np.zeros(spec.shape)
    frozen = np.zeros(spec.shape, dtype=bool)
    c_here = cost.sample(p)
    for i, j in _cell_corners(spec, *p):
        node = (spec.x_min + i * spec.h, spec.y_min + j * spec.h)
        T0[i, j] = c_here * dist_fn(node)
        frozen[i, j] = True
    return T0, frozen


@dataclass(frozen=True)
class PointSource:
    point: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "point", as_point(self.point))

    def check_inside(self, spec: GridSpec):
        if not spec.contains(*self.point):
            raise DomainError(f"point source {self.point} outside the grid")

    def distance(self, p) -> float:
        return math.hypot(p[0] - self.point[0], p[1] - self.point[1])

    def nearest_point(self, p) -> tuple[float, float]:
        return self.point

    def seed(self, cost: ScalarField2D):
        return _seed_cell(cost.spec, cost, self.point, self.distance)


@dataclass(frozen=True)
class DiskSource:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise ParameterError("disk radius must be positive")

    def check_inside(self, spec: GridSpec):
        cx, cy = self.center
        r = self.radius
        if not (spec.contains(cx - r, cy - r) and spec.contains(cx + r, cy + r)):
            raise DomainError(f"disk source at {self.center} with radius {r} leaves the grid")

    def distance(self, p) -> float:
        return max(0.0, math.hypot(p[0] - self.center[0], p[1] - self.center[1]) - self.radius)

    def nearest_point(self, p) -> tuple[float, float]:
        dx, dy = p[0] - self.center[0], p[1] - self.center[1]
        d = math.hypot(dx, dy)
        if d <= self.radius:
            return (float(p[0]), float(p[1]))
        return (self.center[0] + self.radius * dx / d, self.center[1] + self.radius * dy / d)

    def mask(self, spec: GridSpec) -> np.ndarray:
        X, Y = spec.mesh()
        return np.hypot(X - self.center[0], Y - self.center[1]) <= self.radius

    def seed(self, cost: ScalarField2D):
        inside = self.mask(cost.spec)
        if not inside.any():
            return _seed_cell(cost.spec, cost, self.center, self.distance)
        return np.zeros(cost.spec.shape), inside


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_seg(p1, p2, q1))
        or (o2 == 0 and on_seg(p1, p2, q2))
        or (o3 == 0 and on_seg(q1, q2, p1))
        or (o4 == 0 and on_seg(q1, q2, p2))
    )


def _point_segment_nearest(p, a, b):
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return a + t * ab


@dataclass(frozen=True, eq=False)
class PolygonSource:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise ParameterError("polygon source needs at least three vertices")
        if np.array_equal(v[0], v[-1]):
            v = v[:-1]
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ParameterError("polygon source must be simple (edges cross)")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def check_inside(self, spec: GridSpec):
        if not np.all(spec.contains(self.vertices[:, 0], self.vertices[:, 1])):
            raise DomainError("polygon source leaves the grid")

    def contains(self, x, y):
        """Even-odd test; points on an edge count as inside (vectorised)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        on_edge = np.zeros_like(inside)
        v = self.vertices
        for k in range(len(v)):
            (x1, y1), (x2, y2) = v[k], v[(k + 1) % len(v)]
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_at = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < x_at)
            cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            within = (
                (np.minimum(x1, x2) <= x) & (x <= np.maximum(x1, x2))
                & (np.minimum(y1, y2) <= y) & (y <= np.maximum(y1, y2))
            )
            on_edge |= (np.abs(cross) <= 1e-12 * max(1.0, abs(x2 - x1) + abs(y2 - y1))) & within
        return inside | on_edge

    def nearest_point(self, p) -> tuple[float, float]:
        p = np.asarray(p, dtype=np.float64)
        if self.contains(p[0], p[1]):
            return (float(p[0]), float(p[1]))
        v = self.vertices
        best, best_d = None, math.inf
        for k in range(len(v)):
            q = _point_segment_nearest(p, v[k], v[(k + 1) % len(v)])
            d = float(np.hypot(*(p - q)))
            if d < best_d:
                best, best_d = q, d
        return (float(best[0]), float(best[1]))

    def distance(self, p) -> float:
        q = self.nearest_point(p)
        return math.hypot(p[0] - q[0], p[1] - q[1])

    def seed(self, cost: ScalarField2D):
        X, Y = cost.spec.mesh()
        inside = self.contains(X, Y)
        if not inside.any():
            centroid = tuple(self.vertices.mean(axis=0))
            return _seed_cell(cost.spec, cost, centroid, self.distance)
        return np.zeros(cost.spec.shape), inside


SourceSet = Union[PointSource, DiskSource, PolygonSource]


@dataclass(frozen=True)
class EikonalSolution:
    S: ScalarField2D
    source: SourceSet
    cost: ScalarField2D
    n_accepted: int = 0


def solve(cost: ScalarField2D, source: SourceSet, order: int = 2) -> EikonalSolution:
    """Minimum accumulated cost from ``source`` to every grid node.

    ``order=2`` uses the second-order upwind stencil wherever two accepted
    upwind nodes exist (first order elsewhere); ``order=1`` is the plain
    first-order scheme.
    """
    if order not in (1, 2):
        raise ParameterError(f"order must be 1 or 2, got {order}")
    if not np.all(cost.values > 0):
        raise DomainError("cost field must be strictly positive")
    source.check_inside(cost.spec)
    T0, frozen = source.seed(cost)
    T, n_acc = kernels.fmm_march(cost.values, cost.spec.h, T0, frozen, order)
    if not np.all(np.isfinite(T)):
        raise ConvergenceError("fast marching left unreached nodes")
    return EikonalSolution(ScalarField2D(cost.spec, T, FieldKind.EIKONAL), source, cost, int(n_acc))


def extract_wavefronts(sol: EikonalSolution, levels) -> list[list[np.ndarray]]:
    """Iso-contours ``S = k`` for each level, as ``(n, 2)`` arrays of points.

    Closed contours repeat their first point at the end.  Levels at or below
    zero, or above ``max(S)``, yield no polylines.
    """
    levels = [float(k) for k in levels]
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise ParameterError("wavefront levels must be sorted")
    spec = sol.S.spec
    vals = sol.S.values
    s_max = float(vals.max())
    out = []
    for k in levels:
        if k <= 0 or k > s_max:
            out.append([])
            continue
        contours = find_contours(vals, k)
        out.append([
            np.column_stack([spec.x_min + c[:, 0] * spec.h, spec.y_min + c[:, 1] * spec.h])
            for c in contours
            if len(c) >= 2
        ])
    return out


def trace_descent_ray(sol: EikonalSolution, start, step: float | None = None) -> Trajectory:
    """Follow ``-grad S`` from ``start`` back to the source.

    The returned trajectory runs source -> ``start`` and carries its optical
    length over ``sol.cost``.
    """
    h = sol.S.spec.h
    if step is None:
        step = 0.5 * h
    if not (0 < step <= 0.5 * h * (1 + 1e-12)):
        raise ParameterError(f"descent step must lie in (0, h/2], got {step}")
    p = np.array(as_point(start))
    S, cost = sol.S, sol.cost
    s_val = S.sample(p)
    pts = [p.copy()]
    c_min = float(cost.values.min())
    max_steps = int(4.0 * s_val / (c_min * step)) + 1000
    spec = S.spec
    lo = np.array([spec.x_min, spec.y_min])
    hi = np.array([spec.x_max, spec.y_max])
    for _ in range(max_steps):
        if s_val < cost.sample(p) * step:
            break
        # within h of the boundary the gradient is taken h inside, and the
        # step is clipped to the rectangle, so rays can run along a wall
        q = np.clip(p, lo + h, hi - h)
        g = np.array(S.gradient(q))
        gn = math.hypot(g[0], g[1])
        if gn < 1e-9:
            raise ConvergenceError(f"descent stagnated at ({p[0]:.6g}, {p[1]:.6g}) with S={s_val:.6g}")
        p_new = np.clip(p - (step / gn) * g, lo, hi)
        if np.array_equal(p_new, p):
            raise ConvergenceError(f"descent pinned at the boundary near ({p[0]:.6g}, {p[1]:.6g})")
        p = p_new
        s_val = S.sample(p)
        pts.append(p.copy())
    else:
        raise ConvergenceError(
            f"descent did not reach the source within {max_steps} steps; stuck near ({p[0]:.6g}, {p[1]:.6g})"
        )
    pts.append(np.array(sol.source.nearest_point(p)))
    traj = Trajectory.from_points(np.array(pts[::-1]))
    line_integral(cost, traj)
    return traj
