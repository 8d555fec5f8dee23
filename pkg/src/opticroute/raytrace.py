"""Direct integration of the ray equation and two-point shooting.

The ray equation ``d/ds (c dr/ds) = grad c`` is integrated as the first-order
system ``dr/ds = p / c``, ``dp/ds = grad c`` with classical RK4, renormalising
``|p| = c(r)`` after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eikonal import PointSource, solve, trace_descent_ray
from .errors import ConvergenceError, DomainError, OpticrouteError, ParameterError
from .field import ScalarField2D, Trajectory, as_point, line_integral


@dataclass
class RayState:
    r: tuple[float, float]
    p: tuple[float, float]
    s: float = 0.0


class _LeftDomain(Exception):
    pass


def _rhs(cost: ScalarField2D, margin: float, x, y, px, py):
    if not cost.inside(x, y, margin):
        raise _LeftDomain
    c = cost._value_at(x, y)
    gx, gy = cost._grad_at(x, y)
    return px / c, py / c, gx, gy


def _rk4_step(cost, margin, st, ds):
    x, y, px, py = st
    k1 = _rhs(cost, margin, x, y, px, py)
    h2 = 0.5 * ds
    k2 = _rhs(cost, margin, x + h2 * k1[0], y + h2 * k1[1], px + h2 * k1[2], py + h2 * k1[3])
    k3 = _rhs(cost, margin, x + h2 * k2[0], y + h2 * k2[1], px + h2 * k2[2], py + h2 * k2[3])
    k4 = _rhs(cost, margin, x + ds * k3[0], y + ds * k3[1], px + ds * k3[2], py + ds * k3[3])
    w = ds / 6.0
    nx = x + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    ny = y + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    npx = px + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    npy = py + w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    if not cost.inside(nx, ny, margin):
        raise _LeftDomain
    c = cost._value_at(nx, ny)
    scale = c / math.hypot(npx, npy)
    return nx, ny, npx * scale, npy * scale


def _exit_point(cost: ScalarField2D, x, y, dx, dy):
    """Where the straight continuation from ``(x, y)`` meets the grid boundary."""
    s = cost.spec
    t = math.inf
    if dx > 0:
        t = min(t, (s.x_max - x) / dx)
    elif dx < 0:
        t = min(t, (s.x_min - x) / dx)
    if dy > 0:
        t = min(t, (s.y_max - y) / dy)
    elif dy < 0:
        t = min(t, (s.y_min - y) / dy)
    t = max(t, 0.0)
    return (min(max(x + t * dx, s.x_min), s.x_max), min(max(y + t * dy, s.y_min), s.y_max))


def integrate(
    cost: ScalarField2D,
    start,
    direction,
    ds: float,
    max_length: float,
    *,
    return_states: bool = False,
):
    """Trace a ray from ``start`` along unit ``direction`` for ``max_length`` meters.

    The ray stops early when it gets within ``h`` of the boundary (where
    gradients are undefined) and is then continued straight to the boundary.
    With ``return_states=True`` also returns the list of :class:`RayState`.
    """
    h = cost.spec.h
    x, y = as_point(start)
    dx, dy = as_point(direction)
    norm = math.hypot(dx, dy)
    if abs(norm - 1.0) > 1e-9:
        raise ParameterError(f"direction must be a unit vector, |d|={norm}")
    if not (0 < ds <= 0.5 * h * (1 + 1e-12)):
        raise ParameterError(f"ray step must lie in (0, h/2], got {ds}")
    if not max_length > 0:
        raise ParameterError("max_length must be positive")
    if not cost.inside(x, y, h):
        raise DomainError(f"ray start ({x:.6g}, {y:.6g}) is not an interior point")
    c0 = cost._value_at(x, y)
    st = (x, y, c0 * dx, c0 * dy)
    pts = [(x, y)]
    states = [RayState((x, y), (st[2], st[3]), 0.0)]
    s = 0.0
    while s < max_length * (1 - 1e-12):
        step = min(ds, max_length - s)
        try:
            st = _rk4_step(cost, h, st, step)
        except _LeftDomain:
            c = cost._value_at(st[0], st[1])
            ex, ey = _exit_point(cost, st[0], st[1], st[2] / c, st[3] / c)
            if (ex, ey) != pts[-1]:
                pts.append((ex, ey))
                s += math.hypot(ex - st[0], ey - st[1])
                states.append(RayState((ex, ey), (st[2], st[3]), s))
            break
        s += step
        pts.append((st[0], st[1]))
        states.append(RayState((st[0], st[1]), (st[2], st[3]), s))
    traj = Trajectory.from_points(np.array(pts))
    line_integral(cost, traj)
    return (traj, states) if return_states else traj


def _closest_approach(points: np.ndarray, target: np.ndarray):
    """Closest approach of ``target`` to a polyline as ``(signed miss, segment, foot)``."""
    a = points[:-1]
    b = points[1:]
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", target - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    foot = a + ab * t[:, None]
    dist = np.hypot(*(target - foot).T)
    k = int(np.argmin(dist))
    tang = ab[k]
    rel = target - foot[k]
    cross = tang[0] * rel[1] - tang[1] * rel[0]
    sign = 1.0 if cross >= 0 else -1.0
    return sign * float(dist[k]), k, foot[k]


def _descent_angle(cost: ScalarField2D, A, B) -> float | None:
    try:
        sol = solve(cost, PointSource(A))
        ray = trace_descent_ray(sol, B)
    except OpticrouteError:
        return None
    pts = ray.points
    cum = ray.cumulative_length
    k = int(np.searchsorted(cum, min(5.0 * cost.spec.h, 0.25 * cum[-1])))
    k = min(max(k, 1), len(pts) - 1)
    d = pts[k] - np.asarray(A)
    return math.atan2(d[1], d[0])


def shoot(
    cost: ScalarField2D,
    A,
    B,
    tol: float | None = None,
    *,
    ds: float | None = None,
    seed_angle: float | None = None,
    use_eikonal: bool = True,
    max_length: float | None = None,
) -> Trajectory:
    """Ray from ``A`` whose closest approach to ``B`` is within ``tol``.

    The launch angle is bracketed around the eikonal descent direction (or
    ``seed_angle``), falling back to a 64-angle scan, then bisected.  The
    result is truncated at the closest approach and ends exactly at ``B``.
    """
    h = cost.spec.h
    A = np.array(as_point(A))
    B = np.array(as_point(B))
    if tol is None:
        tol = 0.1 * h
    if tol < 0.1 * h * (1 - 1e-12):
        raise ParameterError(f"tolerance must be at least h/10 = {0.1 * h}")
    ds = 0.5 * h if ds is None else ds
    for P, name in ((A, "A"), (B, "B")):
        if not cost.inside(P[0], P[1], h):
            raise DomainError(f"{name}=({P[0]:.6g}, {P[1]:.6g}) is not an interior point")
    dist_ab = float(np.hypot(*(B - A)))
    if dist_ab <= tol:
        traj = Trajectory.from_points([A, B]) if dist_ab > 0 else Trajectory(np.array([A, B]))
        line_integral(cost, traj)
        return traj
    if max_length is None:
        max_length = 3.0 * dist_ab

    cache = {}

    def miss(theta):
        if theta not in cache:
            ray = integrate(cost, A, (math.cos(theta), math.sin(theta)), ds, max_length)
            m, k, foot = _closest_approach(ray.points, B)
            cache[theta] = (m, k, foot, ray)
        return cache[theta]

    def finish(theta):
        m, k, foot, ray = miss(theta)
        pts = np.vstack([ray.points[: k + 1], foot[None, :], B[None, :]])
        traj = Trajectory.from_points(pts)
        line_integral(cost, traj)
        return traj

    if seed_angle is None and use_eikonal:
        seed_angle = _descent_angle(cost, tuple(A), tuple(B))

    bracket = None
    if seed_angle is not None:
        m0 = miss(seed_angle)[0]
        if abs(m0) <= tol:
            return finish(seed_angle)
        delta = 0.005
        while delta <= math.pi and bracket is None:
            for th in (seed_angle - delta, seed_angle + delta):
                m = miss(th)[0]
                if abs(m) <= tol:
                    return finish(th)
                if (m > 0) != (m0 > 0):
                    bracket = (seed_angle, th) if th > seed_angle else (th, seed_angle)
                    break
            delta *= 2.0
    if bracket is None:
        base = math.atan2(B[1] - A[1], B[0] - A[0])
        thetas = base + np.linspace(-math.pi, math.pi, 65)
        ms = [miss(float(th))[0] for th in thetas]
        best = None
        for k in range(64):
            if (ms[k] > 0) != (ms[k + 1] > 0):
                score = min(abs(ms[k]), abs(ms[k + 1]))
                if best is None or score < best[0]:
                    best = (score, float(thetas[k]), float(thetas[k + 1]))
        if best is None:
            raise ConvergenceError("no launch-angle bracket found (target shadowed or multiple branches)")
        bracket = best[1:]

    lo, hi = bracket
    m_lo = miss(lo)[0]
    best_theta, best_miss = lo, abs(m_lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        m_mid = miss(mid)[0]
        if abs(m_mid) < best_miss:
            best_theta, best_miss = mid, abs(m_mid)
        if abs(m_mid) <= tol:
            return finish(mid)
        if (m_mid > 0) == (m_lo > 0):
            lo, m_lo = mid, m_mid
        else:
            hi = mid
    raise ConvergenceError(f"shooting did not converge: best miss {best_miss:.6g} at angle {best_theta:.9g}")
