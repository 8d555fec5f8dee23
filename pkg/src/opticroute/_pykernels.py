"""Pure-Python reference versions of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation and are used when the
compiled extension is unavailable (or ``OPTICROUTE_PURE_PYTHON=1``).
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from .errors import ConvergenceError

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_M53 = 1.0 / 9007199254740992.0
_POISSON_KMAX = 100000

FAR, TRIAL, ACCEPTED = 0, 1, 2


# -- fast marching ----------------------------------------------------------

def _axis_term(T, state, nx, ny, order, i, j, di, dj):
    """Best upwind term ``(value, weight, t1)`` along one axis, or None."""
    best = None
    for sgn in (-1, 1):
        i1, j1 = i + sgn * di, j + sgn * dj
        if not (0 <= i1 < nx and 0 <= j1 < ny) or state[i1][j1] != ACCEPTED:
            continue
        t1 = T[i1][j1]
        if best is not None and t1 >= best[2]:
            continue
        i2, j2 = i1 + sgn * di, j1 + sgn * dj
        if order == 2 and 0 <= i2 < nx and 0 <= j2 < ny and state[i2][j2] == ACCEPTED and T[i2][j2] <= t1:
            best = ((4.0 * t1 - T[i2][j2]) / 3.0, 2.25, t1)
        else:
            best = (t1, 1.0, t1)
    return best


def _upwind(T, state, cost, h, i, j, nx, ny, order):
    f = cost[i][j] * h
    tx = _axis_term(T, state, nx, ny, order, i, j, 1, 0)
    ty = _axis_term(T, state, nx, ny, order, i, j, 0, 1)
    best = math.inf
    for term in (tx, ty):
        if term is not None:
            t = term[0] + f / math.sqrt(term[1])
            if t < best:
                best = t
    if tx is not None and ty is not None:
        (v1, w1, a1), (v2, w2, a2) = tx, ty
        A = w1 + w2
        B = -2.0 * (w1 * v1 + w2 * v2)
        C = w1 * v1 * v1 + w2 * v2 * v2 - f * f
        disc = B * B - 4.0 * A * C
        if disc >= 0.0:
            t = (-B + math.sqrt(disc)) / (2.0 * A)
            if t >= a1 and t >= a2 and t < best:
                best = t
    return best


def fmm_march(cost: np.ndarray, h: float, T0: np.ndarray, frozen: np.ndarray, order: int = 2):
    """Upwind fast marching, first or second order.

    The second-order stencil is used along an axis only when the two upwind
    nodes are accepted and monotone; otherwise that axis falls back to first
    order.

    ``T0`` holds initial values at ``frozen`` nodes (ignored elsewhere).
    Returns ``(T, n_accepted)``.  Raises :class:`ConvergenceError` if the
    accepted sequence ever decreases.
    """
    nx, ny = cost.shape
    c = cost.tolist()
    T = [[math.inf] * ny for _ in range(nx)]
    state = [[FAR] * ny for _ in range(nx)]
    heap = []
    fz = np.argwhere(frozen)
    for i, j in fz.tolist():
        T[i][j] = float(T0[i, j])
        state[i][j] = ACCEPTED
    for i, j in fz.tolist():
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ni < nx and 0 <= nj < ny and state[ni][nj] != ACCEPTED:
                t = _upwind(T, state, c, h, ni, nj, nx, ny, order)
                if t < T[ni][nj]:
                    T[ni][nj] = t
                    state[ni][nj] = TRIAL
                    heapq.heappush(heap, (t, ni, nj))
    n_acc = len(fz)
    last = -math.inf
    while heap:
        t, i, j = heapq.heappop(heap)
        if state[i][j] == ACCEPTED or t > T[i][j]:
            continue
        if t < last - 1e-12 * max(1.0, abs(last)):
            raise ConvergenceError(f"fast marching lost monotonicity at node ({i}, {j}): {t} < {last}")
        last = t
        state[i][j] = ACCEPTED
        n_acc += 1
        for ni, nj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ni < nx and 0 <= nj < ny and state[ni][nj] != ACCEPTED:
                tn = _upwind(T, state, c, h, ni, nj, nx, ny, order)
                if tn < T[ni][nj]:
                    T[ni][nj] = tn
                    state[ni][nj] = TRIAL
                    heapq.heappush(heap, (tn, ni, nj))
    return np.array(T, dtype=np.float64), n_acc


# -- single-hop Monte Carlo -----------------------------------------------

def _mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class _Stream:
    """SplitMix64 stream keyed by ``(seed, trial)``."""

    __slots__ = ("s",)

    def __init__(self, seed, trial):
        self.s = _mix64((seed & _MASK) ^ _mix64((trial + _GOLDEN) & _MASK))

    def uniform(self):
        self.s = (self.s + _GOLDEN) & _MASK
        return ((_mix64(self.s) >> 11) + 0.5) * _TWO_M53


def _poisson(rng, mean, p0):
    u = rng.uniform()
    k = 0
    p = p0
    F = p
    while u > F and k < _POISSON_KMAX:
        k += 1
        p *= mean / k
        F += p
    return k


def hop_trials(seed, trial0, n_trials, a, b, c, D, H, chunk_mean, chunk_p0, n_chunks, r_cert):
    """Nearest-ratio hop search over nested rectangles, one stream per trial.

    Level ``k`` adds the Poisson points of ``[0,D_k]x[0,H_k]`` minus the
    previous rectangle.  A trial stops once its best ratio is at most
    ``r_cert[k]``, which guarantees the global minimiser has been seen.
    Returns ``(x, y, cost, levels)``; ``levels[t] == -1`` marks exhaustion.
    """
    out_x = np.empty(n_trials)
    out_y = np.empty(n_trials)
    out_c = np.empty(n_trials)
    out_l = np.empty(n_trials, dtype=np.int64)
    n_levels = len(D)
    square = b == 2.0
    for t in range(n_trials):
        rng = _Stream(seed, trial0 + t)
        best_r = math.inf
        best_d = math.inf
        bx = by = bc = math.nan
        level = -1
        pd = ph = 0.0
        for k in range(n_levels):
            dk = D[k]
            hk = H[k]
            m = chunk_mean[k]
            p0 = chunk_p0[k]
            count = 0
            for _ in range(n_chunks[k]):
                count += _poisson(rng, m, p0)
            for _ in range(count):
                while True:
                    x = dk * rng.uniform()
                    y = hk * rng.uniform()
                    if not (x < pd and y < ph):
                        break
                d2 = x * x + y * y
                d = math.sqrt(d2)
                if square:
                    cost = a * d2 + c
                else:
                    cost = a * d ** b + c
                r = cost / x
                if r < best_r or (r == best_r and d < best_d):
                    best_r, best_d = r, d
                    bx, by, bc = x, y, cost
            pd, ph = dk, hk
            if best_r <= r_cert[k]:
                level = k
                break
        out_x[t], out_y[t], out_c[t], out_l[t] = bx, by, bc, level
    return out_x, out_y, out_c, out_l


# -- shortest path --------------------------------------------------------

def dijkstra(indptr, indices, weights, src, dst):
    """Label-setting search on a CSR graph with lexicographic (cost, hops) labels.

    Equal labels are resolved toward the lower predecessor index.  Returns
    ``(cost, hops, pred)``; ``cost`` is ``inf`` when ``dst`` is unreachable.
    """
    n = len(indptr) - 1
    ip = indptr.tolist()
    ix = indices.tolist()
    w = weights.tolist()
    dist = [math.inf] * n
    hops = [0] * n
    pred = [-1] * n
    done = [False] * n
    dist[src] = 0.0
    heap = [(0.0, 0, src)]
    while heap:
        du, hu, u = heapq.heappop(heap)
        if done[u] or du > dist[u] or (du == dist[u] and hu > hops[u]):
            continue
        done[u] = True
        if u == dst:
            break
        for e in range(ip[u], ip[u + 1]):
            v = ix[e]
            if done[v]:
                continue
            nd = du + w[e]
            nh = hu + 1
            dv = dist[v]
            if nd < dv or (nd == dv and (nh < hops[v] or (nh == hops[v] and u < pred[v]))):
                dist[v] = nd
                hops[v] = nh
                pred[v] = u
                heapq.heappush(heap, (nd, nh, v))
    return dist[dst], hops[dst], np.array(pred, dtype=np.int64)
