# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_pykernels`` for the contract."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, INFINITY
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, realloc, free

from opticroute.errors import ConvergenceError

cnp.import_array()

DEF FAR = 0
DEF TRIAL = 1
DEF ACCEPTED = 2
DEF POISSON_KMAX = 100000

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


# -- binary min-heap on (key1, key2, item) ----------------------------------

cdef struct Entry:
    double k1
    long k2
    long item

cdef struct Heap:
    Entry* data
    long size
    long cap

cdef int heap_init(Heap* hp, long cap) except -1:
    if cap < 16:
        cap = 16
    hp.data = <Entry*> malloc(cap * sizeof(Entry))
    if hp.data == NULL:
        raise MemoryError()
    hp.size = 0
    hp.cap = cap
    return 0

cdef inline bint entry_lt(Entry a, Entry b) nogil:
    if a.k1 != b.k1:
        return a.k1 < b.k1
    if a.k2 != b.k2:
        return a.k2 < b.k2
    return a.item < b.item

cdef int heap_push(Heap* hp, double k1, long k2, long item) except -1:
    cdef Entry* grown
    cdef long pos, parent
    cdef Entry e
    if hp.size == hp.cap:
        grown = <Entry*> realloc(hp.data, 2 * hp.cap * sizeof(Entry))
        if grown == NULL:
            raise MemoryError()
        hp.data = grown
        hp.cap *= 2
    e.k1 = k1
    e.k2 = k2
    e.item = item
    pos = hp.size
    hp.size += 1
    while pos > 0:
        parent = (pos - 1) >> 1
        if entry_lt(e, hp.data[parent]):
            hp.data[pos] = hp.data[parent]
            pos = parent
        else:
            break
    hp.data[pos] = e
    return 0

cdef Entry heap_pop(Heap* hp) nogil:
    cdef Entry top = hp.data[0]
    cdef Entry last
    cdef long pos = 0, child, n
    hp.size -= 1
    n = hp.size
    if n > 0:
        last = hp.data[n]
        while True:
            child = 2 * pos + 1
            if child >= n:
                break
            if child + 1 < n and entry_lt(hp.data[child + 1], hp.data[child]):
                child += 1
            if entry_lt(hp.data[child], last):
                hp.data[pos] = hp.data[child]
                pos = child
            else:
                break
        hp.data[pos] = last
    return top


# -- fast marching ----------------------------------------------------------

cdef inline bint axis_term(double[:, ::1] T, unsigned char[:, ::1] state, long nx, long ny,
                           int order, long i, long j, long di, long dj,
                           double* val, double* weight, double* t1_out) nogil:
    cdef bint found = False
    cdef long sgn, i1, j1, i2, j2
    cdef double t1
    for sgn in range(-1, 2, 2):
        i1 = i + sgn * di
        j1 = j + sgn * dj
        if i1 < 0 or i1 >= nx or j1 < 0 or j1 >= ny or state[i1, j1] != ACCEPTED:
            continue
        t1 = T[i1, j1]
        if found and t1 >= t1_out[0]:
            continue
        found = True
        t1_out[0] = t1
        i2 = i1 + sgn * di
        j2 = j1 + sgn * dj
        if (order == 2 and i2 >= 0 and i2 < nx and j2 >= 0 and j2 < ny
                and state[i2, j2] == ACCEPTED and T[i2, j2] <= t1):
            val[0] = (4.0 * t1 - T[i2, j2]) / 3.0
            weight[0] = 2.25
        else:
            val[0] = t1
            weight[0] = 1.0
    return found


cdef inline double upwind(double[:, ::1] T, unsigned char[:, ::1] state, const double[:, ::1] cost,
                          double h, long i, long j, long nx, long ny, int order) nogil:
    cdef double f = cost[i, j] * h
    cdef double v1 = 0, w1 = 0, a1 = 0, v2 = 0, w2 = 0, a2 = 0
    cdef double best = INFINITY, t, A, B, C, disc
    cdef bint hx = axis_term(T, state, nx, ny, order, i, j, 1, 0, &v1, &w1, &a1)
    cdef bint hy = axis_term(T, state, nx, ny, order, i, j, 0, 1, &v2, &w2, &a2)
    if hx:
        t = v1 + f / sqrt(w1)
        if t < best:
            best = t
    if hy:
        t = v2 + f / sqrt(w2)
        if t < best:
            best = t
    if hx and hy:
        A = w1 + w2
        B = -2.0 * (w1 * v1 + w2 * v2)
        C = w1 * v1 * v1 + w2 * v2 * v2 - f * f
        disc = B * B - 4.0 * A * C
        if disc >= 0.0:
            t = (-B + sqrt(disc)) / (2.0 * A)
            if t >= a1 and t >= a2 and t < best:
                best = t
    return best


cdef int relax_neighbours(Heap* hp, double[:, ::1] T, unsigned char[:, ::1] state,
                          const double[:, ::1] cost, double h, long i, long j,
                          long nx, long ny, int order) except -1:
    cdef long di, ni, nj
    cdef double t
    cdef long offs_i[4]
    cdef long offs_j[4]
    offs_i[:] = [-1, 1, 0, 0]
    offs_j[:] = [0, 0, -1, 1]
    for di in range(4):
        ni = i + offs_i[di]
        nj = j + offs_j[di]
        if ni < 0 or ni >= nx or nj < 0 or nj >= ny or state[ni, nj] == ACCEPTED:
            continue
        t = upwind(T, state, cost, h, ni, nj, nx, ny, order)
        if t < T[ni, nj]:
            T[ni, nj] = t
            state[ni, nj] = TRIAL
            heap_push(hp, t, 0, ni * ny + nj)
    return 0


def fmm_march(cost_in, double h, T0, frozen, int order=2):
    cdef const double[:, ::1] cost = np.ascontiguousarray(cost_in, dtype=np.float64)
    cdef long nx = cost.shape[0], ny = cost.shape[1]
    T_arr = np.full((nx, ny), np.inf)
    cdef double[:, ::1] T = T_arr
    state_arr = np.zeros((nx, ny), dtype=np.uint8)
    cdef unsigned char[:, ::1] state = state_arr
    cdef const double[:, ::1] t0 = np.ascontiguousarray(T0, dtype=np.float64)
    fz = np.argwhere(frozen)
    cdef long[:, ::1] fzv = np.ascontiguousarray(fz, dtype=np.int_)
    cdef long k, i, j, n_acc = fz.shape[0]
    cdef double last = -INFINITY, t, tol
    cdef Entry e
    cdef Heap hp
    heap_init(&hp, 4 * (nx + ny))
    try:
        for k in range(fzv.shape[0]):
            i = fzv[k, 0]
            j = fzv[k, 1]
            T[i, j] = t0[i, j]
            state[i, j] = ACCEPTED
        for k in range(fzv.shape[0]):
            relax_neighbours(&hp, T, state, cost, h, fzv[k, 0], fzv[k, 1], nx, ny, order)
        while hp.size > 0:
            e = heap_pop(&hp)
            i = e.item // ny
            j = e.item % ny
            t = e.k1
            if state[i, j] == ACCEPTED or t > T[i, j]:
                continue
            tol = 1e-12 * (last if last > 1.0 else (-last if last < -1.0 else 1.0))
            if t < last - tol:
                raise ConvergenceError(
                    f"fast marching lost monotonicity at node ({i}, {j}): {t} < {last}")
            last = t
            state[i, j] = ACCEPTED
            n_acc += 1
            relax_neighbours(&hp, T, state, cost, h, i, j, nx, ny, order)
    finally:
        free(hp.data)
    return T_arr, n_acc


# -- single-hop Monte Carlo -------------------------------------------------

cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)

cdef inline double next_uniform(uint64_t* s) nogil:
    s[0] += GOLDEN
    return (<double>(mix64(s[0]) >> 11) + 0.5) * (1.0 / 9007199254740992.0)

cdef inline long poisson(uint64_t* s, double mean, double p0) nogil:
    cdef double u = next_uniform(s)
    cdef long k = 0
    cdef double p = p0
    cdef double F = p
    while u > F and k < POISSON_KMAX:
        k += 1
        p *= mean / k
        F += p
    return k


def hop_trials(seed, long trial0, long n_trials, double a, double b, double c,
               D_in, H_in, mean_in, p0_in, nchunk_in, rcert_in):
    cdef const double[::1] D = np.ascontiguousarray(D_in, dtype=np.float64)
    cdef const double[::1] H = np.ascontiguousarray(H_in, dtype=np.float64)
    cdef const double[::1] cm = np.ascontiguousarray(mean_in, dtype=np.float64)
    cdef const double[::1] cp0 = np.ascontiguousarray(p0_in, dtype=np.float64)
    cdef const int64_t[::1] nch = np.ascontiguousarray(nchunk_in, dtype=np.int64)
    cdef const double[::1] rc = np.ascontiguousarray(rcert_in, dtype=np.float64)
    cdef uint64_t useed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    out_x = np.empty(n_trials)
    out_y = np.empty(n_trials)
    out_c = np.empty(n_trials)
    out_l = np.empty(n_trials, dtype=np.int64)
    cdef double[::1] ox = out_x, oy = out_y, oc = out_c
    cdef int64_t[::1] ol = out_l
    cdef long n_levels = D.shape[0]
    cdef bint square = b == 2.0
    cdef long t, k, q, count, level
    cdef uint64_t s
    cdef double best_r, best_d, bx, by, bc, pd, ph, dk, hk, x, y, d2, d, cost, r
    with nogil:
        for t in range(n_trials):
            s = mix64(useed ^ mix64(<uint64_t>(trial0 + t) + GOLDEN))
            best_r = INFINITY
            best_d = INFINITY
            bx = by = bc = 0.0 / 0.0
            level = -1
            pd = 0.0
            ph = 0.0
            for k in range(n_levels):
                dk = D[k]
                hk = H[k]
                count = 0
                for q in range(nch[k]):
                    count += poisson(&s, cm[k], cp0[k])
                for q in range(count):
                    while True:
                        x = dk * next_uniform(&s)
                        y = hk * next_uniform(&s)
                        if not (x < pd and y < ph):
                            break
                    d2 = x * x + y * y
                    d = sqrt(d2)
                    if square:
                        cost = a * d2 + c
                    else:
                        cost = a * pow(d, b) + c
                    r = cost / x
                    if r < best_r or (r == best_r and d < best_d):
                        best_r = r
                        best_d = d
                        bx = x
                        by = y
                        bc = cost
                pd = dk
                ph = hk
                if best_r <= rc[k]:
                    level = k
                    break
            ox[t] = bx
            oy[t] = by
            oc[t] = bc
            ol[t] = level
    return out_x, out_y, out_c, out_l


# -- shortest path ----------------------------------------------------------

def dijkstra(indptr_in, indices_in, weights_in, long src, long dst):
    cdef const int64_t[::1] indptr = np.ascontiguousarray(indptr_in, dtype=np.int64)
    cdef const int64_t[::1] indices = np.ascontiguousarray(indices_in, dtype=np.int64)
    cdef const double[::1] w = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef long n = indptr.shape[0] - 1
    dist_arr = np.full(n, np.inf)
    hops_arr = np.zeros(n, dtype=np.int64)
    pred_arr = np.full(n, -1, dtype=np.int64)
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] dist = dist_arr
    cdef int64_t[::1] hops = hops_arr
    cdef int64_t[::1] pred = pred_arr
    cdef unsigned char[::1] done = done_arr
    cdef Heap hp
    cdef Entry e
    cdef long u, v, hu, nh, ei
    cdef double du, nd, dv
    heap_init(&hp, 1024)
    try:
        dist[src] = 0.0
        heap_push(&hp, 0.0, 0, src)
        while hp.size > 0:
            e = heap_pop(&hp)
            u = e.item
            du = e.k1
            hu = e.k2
            if done[u] or du > dist[u] or (du == dist[u] and hu > hops[u]):
                continue
            done[u] = 1
            if u == dst:
                break
            for ei in range(indptr[u], indptr[u + 1]):
                v = indices[ei]
                if done[v]:
                    continue
                nd = du + w[ei]
                nh = hu + 1
                dv = dist[v]
                if nd < dv or (nd == dv and (nh < hops[v] or (nh == hops[v] and u < pred[v]))):
                    dist[v] = nd
                    hops[v] = nh
                    pred[v] = u
                    heap_push(&hp, nd, nh, v)
    finally:
        free(hp.data)
    return float(dist[dst]), int(hops[dst]), pred_arr
