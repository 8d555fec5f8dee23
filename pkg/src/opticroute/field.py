"""Scalar fields sampled on a uniform square grid.

A :class:`ScalarField2D` holds node values ``values[i, j]`` at
``(x_min + i*h, y_min + j*h)``.  Sampling is bilinear, gradients are central
differences of the bilinear interpolant taken at ``+-h/2``, and line
integrals use a composite midpoint rule with sub-steps no longer than ``h/2``.
Every evaluation outside the grid rectangle raises :class:`DomainError`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError, ParameterError

# relative slack (in units of h) when deciding whether a point is on the boundary
_EDGE_SLACK = 1e-9


def as_point(p) -> tuple[float, float]:
    """Validate and return ``p`` as an ``(x, y)`` tuple of finite floats."""
    try:
        x, y = (float(v) for v in p)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"not a 2-D point: {p!r}") from exc
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite point {p!r}")
    return x, y


class FieldKind(str, Enum):
    DENSITY = "density"
    COST = "cost"
    EIKONAL = "eikonal"


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    y_min: float
    nx: int
    ny: int
    h: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ParameterError(f"grid needs nx, ny >= 2, got {self.nx}x{self.ny}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ParameterError(f"grid spacing must be positive, got {self.h}")
        if not (math.isfinite(self.x_min) and math.isfinite(self.y_min)):
            raise ParameterError("grid origin must be finite")

    @classmethod
    def from_extent(cls, x_min: float, x_max: float, y_min: float, y_max: float, h: float) -> "GridSpec":
        """Smallest grid with spacing ``h`` covering the given rectangle."""
        if not (x_max > x_min and y_max > y_min):
            raise ParameterError("domain rectangle must have positive area")
        nx = int(math.ceil((x_max - x_min) / h - 1e-9)) + 1
        ny = int(math.ceil((y_max - y_min) / h - 1e-9)) + 1
        return cls(float(x_min), float(y_min), nx, ny, float(h))

    @property
    def x_max(self) -> float:
        return self.x_min + (self.nx - 1) * self.h

    @property
    def y_max(self) -> float:
        return self.y_min + (self.ny - 1) * self.h

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def xs(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y_min + self.h * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(nx, ny)`` arrays."""
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    def contains(self, x, y, margin: float = 0.0):
        """Whether points lie in the rectangle shrunk by ``margin`` (vectorised)."""
        tol = _EDGE_SLACK * self.h
        return (
            (x >= self.x_min + margin - tol)
            & (x <= self.x_max - margin + tol)
            & (y >= self.y_min + margin - tol)
            & (y <= self.y_max - margin + tol)
        )

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "y_min": self.y_min, "nx": self.nx, "ny": self.ny, "h": self.h}


class ScalarField2D:
    """Immutable grid function with bilinear sampling.

    ``values`` has shape ``(nx, ny)``.  Density and cost fields must be
    strictly positive, eikonal fields nonnegative.
    """

    __slots__ = ("spec", "values", "kind")

    def __init__(self, spec: GridSpec, values, kind: FieldKind | str):
        kind = FieldKind(kind)
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.shape != spec.shape:
            raise ParameterError(f"values shape {arr.shape} does not match grid {spec.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"{kind.value} field has non-finite values")
        if kind in (FieldKind.DENSITY, FieldKind.COST):
            if not np.all(arr > 0):
                i, j = np.unravel_index(np.argmin(arr), arr.shape)
                raise DomainError(
                    f"{kind.value} field must be strictly positive; "
                    f"value {arr[i, j]!r} at node ({i}, {j})"
                )
        elif not np.all(arr >= 0):
            raise DomainError("eikonal field must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "kind", kind)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField2D is immutable")

    def __eq__(self, other):
        if not isinstance(other, ScalarField2D):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __reduce__(self):
        return (ScalarField2D, (self.spec, np.array(self.values), self.kind))

    def __repr__(self):
        s = self.spec
        return f"ScalarField2D({self.kind.value}, {s.nx}x{s.ny}, h={s.h})"

    @classmethod
    def from_function(cls, spec: GridSpec, func: Callable, kind: FieldKind | str) -> "ScalarField2D":
        """Rasterise ``func(x, y)`` (vectorised over arrays) onto the grid nodes."""
        X, Y = spec.mesh()
        vals = np.broadcast_to(np.asarray(func(X, Y), dtype=np.float64), spec.shape)
        return cls(spec, vals, kind)

    @classmethod
    def constant(cls, spec: GridSpec, value: float, kind: FieldKind | str) -> "ScalarField2D":
        return cls(spec, np.full(spec.shape, float(value)), kind)

    def with_values(self, values, kind: FieldKind | str | None = None) -> "ScalarField2D":
        return ScalarField2D(self.spec, values, self.kind if kind is None else kind)

    # -- sampling -----------------------------------------------------------

    def _check_inside(self, x, y, margin=0.0, what="point"):
        inside = self.spec.contains(x, y, margin)
        if not np.all(inside):
            bad = np.flatnonzero(~np.atleast_1d(inside))[0]
            bx, by = np.atleast_1d(x)[bad], np.atleast_1d(y)[bad]
            raise DomainError(
                f"{what} ({bx:.6g}, {by:.6g}) outside "
                f"[{self.spec.x_min + margin:.6g}, {self.spec.x_max - margin:.6g}] x "
                f"[{self.spec.y_min + margin:.6g}, {self.spec.y_max - margin:.6g}]"
            )

    def _bilinear(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        s = self.spec
        fx = (x - s.x_min) / s.h
        fy = (y - s.y_min) / s.h
        i = np.clip(np.floor(fx).astype(np.intp), 0, s.nx - 2)
        j = np.clip(np.floor(fy).astype(np.intp), 0, s.ny - 2)
        tx = np.clip(fx - i, 0.0, 1.0)
        ty = np.clip(fy - j, 0.0, 1.0)
        v = self.values
        v00 = v[i, j]
        v10 = v[i + 1, j]
        v01 = v[i, j + 1]
        v11 = v[i + 1, j + 1]
        # lerp form keeps constant fields and grid nodes exact
        lo = v00 + tx * (v10 - v00)
        hi = v01 + tx * (v11 - v01)
        return lo + ty * (hi - lo)

    def _value_at(self, x: float, y: float) -> float:
        # scalar twin of _bilinear; no domain check
        s = self.spec
        fx = (x - s.x_min) / s.h
        fy = (y - s.y_min) / s.h
        i = min(max(int(math.floor(fx)), 0), s.nx - 2)
        j = min(max(int(math.floor(fy)), 0), s.ny - 2)
        tx = min(max(fx - i, 0.0), 1.0)
        ty = min(max(fy - j, 0.0), 1.0)
        v = self.values
        v00 = float(v[i, j])
        v10 = float(v[i + 1, j])
        v01 = float(v[i, j + 1])
        v11 = float(v[i + 1, j + 1])
        lo = v00 + tx * (v10 - v00)
        hi = v01 + tx * (v11 - v01)
        return lo + ty * (hi - lo)

    def _grad_at(self, x: float, y: float) -> tuple[float, float]:
        h = self.spec.h
        hh = 0.5 * h
        f = self._value_at
        return (f(x + hh, y) - f(x - hh, y)) / h, (f(x, y + hh) - f(x, y - hh)) / h

    def inside(self, x: float, y: float, margin: float = 0.0) -> bool:
        return bool(self.spec.contains(x, y, margin))

    def sample(self, p) -> float:
        x, y = as_point(p)
        if not self.inside(x, y):
            self._check_inside(x, y)
        return self._value_at(x, y)

    def sample_many(self, xy) -> np.ndarray:
        """Bilinear values at an ``(n, 2)`` array of points."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
        self._check_inside(x, y)
        return self._bilinear(x, y)

    def gradient(self, p) -> tuple[float, float]:
        x, y = as_point(p)
        if not self.inside(x, y, self.spec.h):
            self._check_inside(x, y, margin=self.spec.h, what="gradient point")
        return self._grad_at(x, y)

    def gradient_many(self, xy) -> np.ndarray:
        """Central-difference gradient of the interpolant; points must be ``h`` inside."""
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        x, y = xy[:, 0], xy[:, 1]
        h = self.spec.h
        self._check_inside(x, y, margin=h, what="gradient point")
        hh = 0.5 * h
        gx = (self._bilinear(x + hh, y) - self._bilinear(x - hh, y)) / h
        gy = (self._bilinear(x, y + hh) - self._bilinear(x, y - hh)) / h
        return np.column_stack([gx, gy])


@dataclass(eq=False)
class Trajectory:
    """Oriented polyline with its arc length and (once computed) optical length."""

    points: np.ndarray
    optical_length: float = math.nan
    arc_length: float = dc_field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 2:
            raise ParameterError("a trajectory needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise DomainError("trajectory has non-finite coordinates")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        # a single zero-length segment is the degenerate "already at the target" route
        if len(pts) > 2 and np.any(lengths == 0):
            raise ParameterError("consecutive trajectory points must be distinct")
        pts.setflags(write=False)
        self.points = pts
        self.arc_length = float(lengths.sum())

    @classmethod
    def from_points(cls, points: Iterable) -> "Trajectory":
        """Build a trajectory, dropping consecutive duplicate points."""
        pts = np.asarray(list(points) if not isinstance(points, np.ndarray) else points, dtype=np.float64)
        pts = pts.reshape(-1, 2)
        if len(pts) > 1:
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.any(np.diff(pts, axis=0) != 0, axis=1)
            reduced = pts[keep]
            pts = reduced if len(reduced) >= 2 else pts[[0, -1]]
        return cls(pts)

    @property
    def segment_lengths(self) -> np.ndarray:
        d = np.diff(self.points, axis=0)
        return np.hypot(d[:, 0], d[:, 1])

    @property
    def cumulative_length(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)])

    @property
    def start(self) -> tuple[float, float]:
        return float(self.points[0, 0]), float(self.points[0, 1])

    @property
    def end(self) -> tuple[float, float]:
        return float(self.points[-1, 0]), float(self.points[-1, 1])

    def reversed(self) -> "Trajectory":
        return Trajectory(self.points[::-1].copy(), self.optical_length)

    def concat(self, other: "Trajectory") -> "Trajectory":
        """Join two trajectories sharing an endpoint."""
        if not np.array_equal(self.points[-1], other.points[0]):
            raise ParameterError("trajectories do not share an endpoint")
        return Trajectory(np.vstack([self.points, other.points[1:]]))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        same_len = self.optical_length == other.optical_length or (
            math.isnan(self.optical_length) and math.isnan(other.optical_length)
        )
        return np.array_equal(self.points, other.points) and same_len


def segment_integrals(field: ScalarField2D, traj: Trajectory) -> np.ndarray:
    """Per-segment midpoint-rule integrals of ``field`` along ``traj``."""
    pts = traj.points
    lengths = traj.segment_lengths
    half_h = 0.5 * field.spec.h
    n_sub = np.maximum(1, np.ceil(lengths / half_h).astype(np.intp))
    seg_id = np.repeat(np.arange(len(lengths)), n_sub)
    offsets = np.concatenate([[0], np.cumsum(n_sub)[:-1]])
    k = np.arange(len(seg_id)) - np.repeat(offsets, n_sub)
    t = (k + 0.5) / n_sub[seg_id]
    a = pts[seg_id]
    b = pts[seg_id + 1]
    mids = a + (b - a) * t[:, None]
    try:
        vals = field.sample_many(mids)
    except DomainError as exc:
        raise DomainError(f"trajectory leaves the field domain: {exc}") from None
    weights = (lengths / n_sub)[seg_id]
    return np.bincount(seg_id, weights=vals * weights, minlength=len(lengths))


def line_integral(field: ScalarField2D, traj: Trajectory) -> float:
    """Integral of ``field`` along ``traj``; also stored in ``traj.optical_length``."""
    # same accumulation order as cumulative_line_integral, so the two agree bit for bit
    total = float(cumulative_line_integral(field, traj)[-1])
    traj.optical_length = total
    return total


def cumulative_line_integral(field: ScalarField2D, traj: Trajectory) -> np.ndarray:
    """Running integral at every vertex of ``traj`` (first entry 0)."""
    return np.concatenate([[0.0], np.cumsum(segment_integrals(field, traj))])


# -- serialisation ------------------------------------------------------------

def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_field_csv(field: ScalarField2D, path) -> Path:
    """Write ``x,y,value`` rows (C order over ``(i, j)``) plus a JSON sidecar."""
    path = Path(path)
    X, Y = field.spec.mesh()
    data = np.column_stack([X.ravel(), Y.ravel(), field.values.ravel()])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,value\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    meta = dict(field.spec.to_dict(), kind=field.kind.value)
    sidecar_path(path).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return path


def read_field_csv(path) -> ScalarField2D:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    spec = GridSpec(float(meta["x_min"]), float(meta["y_min"]), int(meta["nx"]), int(meta["ny"]), float(meta["h"]))
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "x,y,value":
            raise ParameterError(f"{path}: unexpected header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (spec.nx * spec.ny, 3):
        raise ParameterError(f"{path}: expected {spec.nx * spec.ny} rows, found {data.shape[0]}")
    return ScalarField2D(spec, data[:, 2].reshape(spec.shape), meta["kind"])


def write_trajectory_csv(traj: Trajectory, path, field: ScalarField2D | None = None) -> Path:
    """Write ``seq,x,y,s,optical_length_so_far``.

    The running optical length is recomputed over ``field`` when given;
    otherwise the column is empty except for the stored total on the last row.
    """
    path = Path(path)
    pts = traj.points.tolist()
    s = traj.cumulative_length.tolist()
    if field is not None:
        opt = cumulative_line_integral(field, traj).tolist()
    else:
        opt = [math.nan] * len(pts)
        opt[-1] = traj.optical_length
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("seq,x,y,s,optical_length_so_far\n")
        for k, ((x, y), sk, ok) in enumerate(zip(pts, s, opt)):
            fh.write(f"{k},{x!r},{y!r},{sk!r},{ok!r}\n")
    return path


def read_trajectory_csv(path) -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "seq,x,y,s,optical_length_so_far":
            raise ParameterError(f"{path}: unexpected header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    traj = Trajectory(data[:, 1:3].copy())
    traj.optical_length = float(data[-1, 4])
    return traj


def write_polylines_csv(polylines, path) -> Path:
    """Write a list of ``(n, 2)`` arrays as ``ray_id,seq,x,y`` rows."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ray_id,seq,x,y\n")
        for rid, line in enumerate(polylines):
            for k, (x, y) in enumerate(np.asarray(line, dtype=np.float64).reshape(-1, 2).tolist()):
                fh.write(f"{rid},{k},{x!r},{y!r}\n")
    return path


def read_polylines_csv(path) -> list[np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "ray_id,seq,x,y":
            raise ParameterError(f"{path}: unexpected header {header!r}")
        body = fh.read()
    if not body.strip():
        return []
    data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
    ids = data[:, 0].astype(np.int64)
    return [data[ids == rid, 2:4].copy() for rid in range(int(ids.max()) + 1)]


# -- path metrics -----------------------------------------------------------------

def _abs_integral(a: np.ndarray, b: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Exact integral of ``|u|`` over segments where ``u`` runs linearly from ``a`` to ``b``."""
    same = a * b >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        split = (a * a + b * b) / (2.0 * np.abs(a - b))
    return lengths * np.where(same, 0.5 * np.abs(a + b), np.where(np.isfinite(split), split, 0.0))


def mean_abs_coordinate(traj: Trajectory, axis: int = 0, offset: float = 0.0) -> float:
    """Arc-length average of ``|coord - offset|`` along ``traj``."""
    u = traj.points[:, axis] - offset
    lengths = traj.segment_lengths
    if traj.arc_length == 0:
        return float(abs(u[0]))
    return float(np.sum(_abs_integral(u[:-1], u[1:], lengths)) / traj.arc_length)


def max_abs_coordinate(traj: Trajectory, axis: int = 0, offset: float = 0.0) -> float:
    return float(np.max(np.abs(traj.points[:, axis] - offset)))
