"""Poisson node networks with greedy forwarding along trajectories.

Nodes are drawn by thinning a homogeneous Poisson process.  Greedy
forwarding follows a trajectory: a node's *progress* is the arc length of
its projection onto the polyline, and its *offset* is the signed distance to
the nearest segment (positive on the left).  Rule A picks the neighbour with
the smallest hop cost per unit of progress.  Rule B does the same but refuses
to move further away from the trajectory on the side the current node
already occupies.  A shortest-path search over the same nodes gives the
best achievable route for comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.spatial import cKDTree

from . import costmodels
from ._backend import kernels
from .eikonal import PointSource, solve, trace_descent_ray
from .errors import DomainError, OpticrouteError, ParameterError, UnreachableError
from .field import FieldKind, ScalarField2D, Trajectory, as_point, line_integral

_CAND_FACTOR = 5.0
_CAND_EXPANSIONS = 3
_PROJ_CHUNK = 256


# -- hop cost kinds -----------------------------------------------------------

@dataclass(frozen=True)
class QuadraticHop:
    """Transmission cost ``d^2``."""

    name = "quadratic"

    def cost(self, d):
        d = np.asarray(d, dtype=np.float64)
        c = d * d
        return float(c) if c.ndim == 0 else c

    def search_scale(self, lam: float) -> float:
        """Typical ratio-minimising hop length at density ``lam``."""
        return math.sqrt(2.0 / lam)

    def oracle_edge(self, lam_min: float) -> float:
        return 4.0 * self.search_scale(lam_min)

    def mc_params(self):
        return 1.0, 2.0, 0.0

    def to_dict(self):
        return {"type": self.name}


@dataclass(frozen=True)
class EnergyHop:
    """Transmission cost ``a d^b + c``."""

    a: float
    b: float
    c: float
    name = "energy"

    def __post_init__(self):
        costmodels.d_opt(self.a, self.b, self.c)

    def cost(self, d):
        d = np.asarray(d, dtype=np.float64)
        c = self.a * d**self.b + self.c
        return float(c) if c.ndim == 0 else c

    def search_scale(self, lam: float) -> float:
        return max(costmodels.d_opt(self.a, self.b, self.c), math.sqrt(2.0 / lam))

    def oracle_edge(self, lam_min: float) -> float:
        return 4.0 * 4.0 * costmodels.d_opt(self.a, self.b, self.c)

    def mc_params(self):
        return self.a, self.b, self.c

    def to_dict(self):
        return {"type": self.name, "a": self.a, "b": self.b, "c": self.c}


HopCostKind = Union[QuadraticHop, EnergyHop]


def hop_cost_from_dict(cfg: dict) -> HopCostKind:
    kind = str(cfg.get("type", "quadratic")).lower()
    if kind == "quadratic":
        return QuadraticHop()
    if kind == "energy":
        try:
            return EnergyHop(float(cfg["a"]), float(cfg["b"]), float(cfg["c"]))
        except KeyError as exc:
            raise ParameterError(f"energy hop cost is missing parameter {exc.args[0]!r}") from None
    raise ParameterError(f"unknown hop cost type {kind!r}")


# -- networks -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NetworkRealization:
    nodes: np.ndarray
    density: ScalarField2D | None = None
    seed: int | None = None
    _tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.nodes, dtype=np.float64).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "nodes", pts)
        object.__setattr__(self, "_tree", cKDTree(pts) if len(pts) else None)

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        # node coordinates are what the CSV carries; that is the identity
        if not isinstance(other, NetworkRealization):
            return NotImplemented
        return np.array_equal(self.nodes, other.nodes)

    __hash__ = None

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            raise ParameterError("network has no nodes")
        return self._tree

    def nearest_node(self, p) -> int:
        _, k = self.tree.query(as_point(p))
        return int(k)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("node_id,x,y\n")
            for k, (x, y) in enumerate(self.nodes.tolist()):
                fh.write(f"{k},{x!r},{y!r}\n")
        return path

    @classmethod
    def read_csv(cls, path) -> "NetworkRealization":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "node_id,x,y":
                raise ParameterError(f"{path}: unexpected header {header!r}")
            body = fh.read()
        if not body.strip():
            return cls(np.empty((0, 2)))
        data = np.loadtxt(body.splitlines(), delimiter=",", ndmin=2)
        if not np.array_equal(data[:, 0], np.arange(len(data))):
            raise ParameterError(f"{path}: node ids must be 0..n-1 in order")
        return cls(data[:, 1:3].copy())


def sample_network(density: ScalarField2D, seed: int) -> NetworkRealization:
    """Inhomogeneous Poisson nodes over the density's grid rectangle, by thinning."""
    if not np.all(density.values > 0):
        raise DomainError("density must be strictly positive")
    s = density.spec
    lam_max = float(density.values.max())
    width, height = s.x_max - s.x_min, s.y_max - s.y_min
    rng = np.random.default_rng(seed)
    n = int(rng.poisson(lam_max * width * height))
    xy = rng.uniform(size=(n, 2))
    pts = np.column_stack([s.x_min + width * xy[:, 0], s.y_min + height * xy[:, 1]])
    keep = rng.uniform(size=n) * lam_max < density.sample_many(pts)
    return NetworkRealization(pts[keep], density=density, seed=seed)


# -- routes -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Route:
    node_indices: np.ndarray
    points: np.ndarray
    hop_costs: np.ndarray
    reached: bool = True
    total_cost: float = field(init=False)

    def __post_init__(self):
        idx = np.array(self.node_indices, dtype=np.int64).ravel()
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 2)
        costs = np.array(self.hop_costs, dtype=np.float64).ravel()
        if len(idx) == 0 or len(pts) != len(idx) or len(costs) != len(idx) - 1:
            raise ParameterError("route needs n nodes, n points and n-1 hop costs")
        if np.any(idx[1:] == idx[:-1]):
            raise ParameterError("consecutive route nodes must be distinct")
        for arr in (idx, pts, costs):
            arr.setflags(write=False)
        object.__setattr__(self, "node_indices", idx)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "hop_costs", costs)
        object.__setattr__(self, "total_cost", float(self.cumulative_cost[-1]))

    @property
    def n_hops(self) -> int:
        return len(self.hop_costs)

    @property
    def cumulative_cost(self) -> np.ndarray:
        # left-to-right accumulation, the same order the oracle uses
        out = np.zeros(len(self.node_indices))
        acc = 0.0
        for k, c in enumerate(self.hop_costs.tolist()):
            acc += c
            out[k + 1] = acc
        return out

    def as_trajectory(self) -> Trajectory:
        return Trajectory.from_points(self.points)

    def __eq__(self, other):
        if not isinstance(other, Route):
            return NotImplemented
        return (
            self.reached == other.reached
            and np.array_equal(self.node_indices, other.node_indices)
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.hop_costs, other.hop_costs)
        )

    __hash__ = None

    def write_csv(self, path) -> Path:
        path = Path(path)
        cum = self.cumulative_cost.tolist()
        hops = [0.0] + self.hop_costs.tolist()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("seq,node_id,x,y,hop_cost,cum_cost\n")
            for k, (n, (x, y)) in enumerate(zip(self.node_indices.tolist(), self.points.tolist())):
                fh.write(f"{k},{n},{x!r},{y!r},{hops[k]!r},{cum[k]!r}\n")
        return path

    @classmethod
    def read_csv(cls, path, reached: bool = True) -> "Route":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "seq,node_id,x,y,hop_cost,cum_cost":
                raise ParameterError(f"{path}: unexpected header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        return cls(data[:, 1].astype(np.int64), data[:, 2:4].copy(), data[1:, 4].copy(), reached)


# -- trajectory projection ------------------------------------------------------

class _Projector:
    """Arc-length progress and signed offset of points relative to a polyline."""

    def __init__(self, traj: Trajectory):
        pts = traj.points
        self.a = pts[:-1]
        self.ab = np.diff(pts, axis=0)
        self.len2 = np.einsum("ij,ij->i", self.ab, self.ab)
        self.cum = traj.cumulative_length

    def __call__(self, q: np.ndarray):
        q = np.asarray(q, dtype=np.float64).reshape(-1, 2)
        s_out = np.empty(len(q))
        v_out = np.empty(len(q))
        safe = np.where(self.len2 > 0, self.len2, 1.0)
        for lo in range(0, len(q), _PROJ_CHUNK):
            qq = q[lo:lo + _PROJ_CHUNK]
            rel = qq[:, None, :] - self.a[None, :, :]
            t = np.clip(np.einsum("mnk,nk->mn", rel, self.ab) / safe, 0.0, 1.0)
            off = rel - t[:, :, None] * self.ab[None, :, :]
            d2 = np.einsum("mnk,mnk->mn", off, off)
            k = np.argmin(d2, axis=1)
            rows = np.arange(len(qq))
            tk = t[rows, k]
            s_out[lo:lo + len(qq)] = self.cum[k] + tk * np.sqrt(self.len2[k])
            abk = self.ab[k]
            relk = rel[rows, k]
            cross = abk[:, 0] * relk[:, 1] - abk[:, 1] * relk[:, 0]
            v_out[lo:lo + len(qq)] = np.sign(cross) * np.sqrt(d2[rows, k])
        return s_out, v_out


def capture_radius(lam: float) -> float:
    return 2.0 / math.sqrt(lam)


def _local_density(net: NetworkRealization, p) -> float:
    if net.density is None:
        raise ParameterError("network has no density field attached")
    return net.density.sample(p)


def forward(
    net: NetworkRealization,
    traj: Trajectory,
    start: int,
    dest,
    rule: str,
    cost_kind: HopCostKind,
    *,
    dest_node: int | None = None,
) -> Route:
    """Greedy trajectory-based forwarding from node ``start`` toward ``dest``.

    Stops once the current node is within ``2/sqrt(lam(dest))`` of ``dest``
    (then hops to ``dest_node`` if given) or when no admissible neighbour
    exists, in which case the route comes back with ``reached=False``.
    """
    rule = rule.upper()
    if rule not in ("A", "B"):
        raise ParameterError(f"rule must be 'A' or 'B', got {rule!r}")
    if not 0 <= start < len(net):
        raise ParameterError(f"start node {start} out of range")
    dest = np.array(as_point(dest))
    nodes = net.nodes
    head = np.asarray(traj.start)
    r_head = capture_radius(_local_density(net, head))
    if math.hypot(*(nodes[start] - head)) > r_head:
        raise ParameterError(
            f"start node {start} is {math.hypot(*(nodes[start] - head)):.6g} m from the trajectory head "
            f"(capture radius {r_head:.6g})"
        )
    r_cap = capture_radius(_local_density(net, dest))
    proj = _Projector(traj)
    s_all, v_all = proj(nodes)

    path = [start]
    costs = []
    cur = start
    reached = False
    while True:
        p = nodes[cur]
        if math.hypot(*(p - dest)) <= r_cap:
            reached = True
            break
        radius = _CAND_FACTOR * cost_kind.search_scale(_local_density(net, p))
        choice = None
        for _ in range(_CAND_EXPANSIONS + 1):
            cand = np.array(sorted(net.tree.query_ball_point(p, radius)), dtype=np.int64)
            cand = cand[cand != cur]
            progress = s_all[cand] - s_all[cur]
            ok = progress > 0
            if rule == "B" and v_all[cur] != 0:
                v0 = v_all[cur]
                vc = v_all[cand]
                ok &= ~((np.sign(vc) == np.sign(v0)) & (np.abs(vc) > abs(v0)))
            if np.any(ok):
                cand, progress = cand[ok], progress[ok]
                d = np.hypot(*(nodes[cand] - p).T)
                hop = np.asarray(cost_kind.cost(d), dtype=np.float64)
                ratio = hop / progress
                # smallest ratio, then shorter hop, then lower index
                k = np.lexsort((cand, d, ratio))[0]
                choice = (int(cand[k]), float(hop[k]), float(progress[k]))
                break
            radius *= 2.0
        if choice is None:
            break
        nxt, c, adv = choice
        assert adv > 0, "forwarding progress must increase"
        path.append(nxt)
        costs.append(c)
        cur = nxt
    if reached and dest_node is not None and dest_node != cur:
        path.append(int(dest_node))
        costs.append(float(cost_kind.cost(math.hypot(*(nodes[dest_node] - nodes[cur])))))
    idx = np.array(path, dtype=np.int64)
    return Route(idx, nodes[idx], np.array(costs), reached)


def max_deviation(route: Route, traj: Trajectory) -> float:
    """Largest unsigned offset of a route's nodes from ``traj``."""
    _, v = _Projector(traj)(route.points)
    return float(np.max(np.abs(v)))


# -- single-hop statistics ------------------------------------------------------

def hop_samples(lam: float, cost_kind: HopCostKind, n_trials: int, seed: int) -> costmodels.HopSample:
    a, b, c = cost_kind.mc_params()
    return costmodels.sample_hops(lam, a, b, c, n_trials, seed)


def hop_stats_mc(lam: float, cost_kind: HopCostKind, n_trials: int, seed: int) -> costmodels.HopStats:
    """Single-hop statistics in the positive quadrant."""
    return hop_samples(lam, cost_kind, n_trials, seed).stats()


# -- shortest-path oracle ------------------------------------------------------

def _edge_pairs(nodes: np.ndarray, tree: cKDTree, max_edge: float) -> np.ndarray:
    if math.isinf(max_edge):
        i, j = np.triu_indices(len(nodes), k=1)
        return np.column_stack([i, j])
    pairs = tree.query_pairs(max_edge, output_type="ndarray")
    return pairs.reshape(-1, 2).astype(np.int64)


def build_graph(net: NetworkRealization, cost_kind: HopCostKind, max_edge: float):
    """Symmetric CSR graph ``(indptr, indices, weights)`` over pairs within ``max_edge``."""
    n = len(net)
    pairs = _edge_pairs(net.nodes, net.tree, max_edge)
    u = np.concatenate([pairs[:, 0], pairs[:, 1]])
    v = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((v, u))
    u, v = u[order], v[order]
    d = np.hypot(*(net.nodes[u] - net.nodes[v]).T)
    w = np.asarray(cost_kind.cost(d), dtype=np.float64).reshape(-1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(u, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(v, dtype=np.int64), np.ascontiguousarray(w)


def default_max_edge(net: NetworkRealization, cost_kind: HopCostKind) -> float:
    if net.density is None:
        return math.inf
    return cost_kind.oracle_edge(float(net.density.values.min()))


def shortest_path(
    net: NetworkRealization,
    cost_kind: HopCostKind,
    src: int,
    dst: int,
    max_edge: float | None = None,
) -> Route:
    """Minimum-cost route over edges no longer than ``max_edge``.

    Equal costs prefer fewer hops, then the lower predecessor index.
    """
    n = len(net)
    if not (0 <= src < n and 0 <= dst < n):
        raise ParameterError(f"node index out of range (n={n})")
    if src == dst:
        raise ParameterError("source and destination must differ")
    if max_edge is None:
        max_edge = default_max_edge(net, cost_kind)
    if not max_edge > 0:
        raise ParameterError("max_edge must be positive")
    indptr, indices, weights = build_graph(net, cost_kind, float(max_edge))
    total, _, pred = kernels.dijkstra(indptr, indices, weights, int(src), int(dst))
    if not math.isfinite(total):
        raise UnreachableError(f"node {dst} unreachable from {src} with max_edge={max_edge:.6g}; try a larger max_edge")
    path = [int(dst)]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    idx = np.array(path[::-1], dtype=np.int64)
    d = np.hypot(*np.diff(net.nodes[idx], axis=0).T)
    return Route(idx, net.nodes[idx], np.asarray(cost_kind.cost(d), dtype=np.float64).reshape(-1), True)


# -- five-way comparison -------------------------------------------------------

ARTIFACTS = ("straight_line", "tbf_straight", "optics", "tbf_optics", "oracle")
ARTIFACT_LETTERS = dict(zip(ARTIFACTS, "abcde"))


def _labelled(label: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except OpticrouteError as exc:
        err = type(exc)(f"[{label}] {exc}")
        err.artifact = label
        raise err from exc


@dataclass(eq=False)
class ComparisonReport:
    costs: dict
    trajectories: dict
    routes: dict
    metadata: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return all(r.reached for r in self.routes.values())

    def to_dict(self) -> dict:
        return {
            "costs": {k: self.costs[k] for k in ARTIFACTS},
            "reached": {k: bool(r.reached) for k, r in self.routes.items()},
            "hops": {k: int(r.n_hops) for k, r in self.routes.items()},
            "metadata": self.metadata,
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def compare(
    net: NetworkRealization,
    cost_field: ScalarField2D,
    cost_kind: HopCostKind,
    A,
    B,
    *,
    rule: str = "B",
    max_edge: float | None = None,
) -> ComparisonReport:
    """Every entry of ``ARTIFACTS`` for the trip from A to B.

    Node routes run between the nodes nearest ``A`` and ``B``.
    """
    if cost_field.kind != FieldKind.COST:
        raise ParameterError("compare needs a cost field")
    A = as_point(A)
    B = as_point(B)
    h = cost_field.spec.h
    for P, name in ((A, "A"), (B, "B")):
        if not cost_field.inside(P[0], P[1], h):
            raise DomainError(f"{name}={P} is not an interior point")
    src = net.nearest_node(A)
    dst = net.nearest_node(B)
    if src == dst:
        raise ParameterError("A and B share their nearest node")

    straight = Trajectory.from_points([A, B])
    line_integral(cost_field, straight)
    sol = _labelled("optics", solve, cost_field, PointSource(A))
    optics = _labelled("optics", trace_descent_ray, sol, B)
    tbf_s = _labelled("tbf_straight", forward, net, straight, src, B, rule, cost_kind, dest_node=dst)
    tbf_o = _labelled("tbf_optics", forward, net, optics, src, B, rule, cost_kind, dest_node=dst)
    oracle = _labelled("oracle", shortest_path, net, cost_kind, src, dst, max_edge)
    costs = {
        "straight_line": straight.optical_length,
        "tbf_straight": tbf_s.total_cost,
        "optics": optics.optical_length,
        "tbf_optics": tbf_o.total_cost,
        "oracle": oracle.total_cost,
    }
    meta = {
        "seed": net.seed,
        "n_nodes": len(net),
        "A": list(A),
        "B": list(B),
        "src_node": src,
        "dst_node": dst,
        "rule": rule,
        "hop_cost": cost_kind.to_dict(),
        "grid": cost_field.spec.to_dict(),
    }
    return ComparisonReport(
        costs,
        {"straight_line": straight, "optics": optics},
        {"tbf_straight": tbf_s, "tbf_optics": tbf_o, "oracle": oracle},
        meta,
    )
