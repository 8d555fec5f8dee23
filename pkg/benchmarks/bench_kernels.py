"""Time the compiled kernels against the pure-Python fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``.  Both backends
are imported directly, so the result does not depend on
``OPTICROUTE_PURE_PYTHON``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from opticroute import _pykernels
from opticroute.costmodels import _level_schedule
from opticroute.field import GridSpec, ScalarField2D
from opticroute.microsim import QuadraticHop, build_graph, sample_network

try:
    from opticroute import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    n = 201
    cost = 1.0 / np.sqrt(3e-5 * np.linspace(-100, 100, n)[:, None] ** 2 + 0.01) * np.ones((1, n))
    T0 = np.zeros((n, n))
    frozen = np.zeros((n, n), dtype=bool)
    frozen[100, 100] = True
    yield "fmm_march 201x201", lambda k: k.fmm_march(cost, 1.0, T0, frozen, 2)

    sched = _level_schedule(1.0, 1.0, 2.0, 0.0)
    yield "hop_trials 20000", lambda k: k.hop_trials(0, 0, 20_000, 1.0, 2.0, 0.0, *sched)

    spec = GridSpec.from_extent(-70, 90, -15, 215, 1.0)
    dens = ScalarField2D.from_function(spec, lambda x, y: 0.5e-4 * x**2 + 0.025 + 0 * y, "density")
    net = sample_network(dens, 0)
    graph = build_graph(net, QuadraticHop(), 20.0)
    src, dst = net.nearest_node((0, 0)), net.nearest_node((0, 200))
    yield f"dijkstra {len(net)} nodes", lambda k: k.dijkstra(*graph, src, dst)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; only the Python backend can run")
    print(f"{'kernel':<28}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for name, run in cases():
        t_py, r_py = _best_of(lambda: run(_pykernels), 1)
        if _ckernels is None:
            print(f"{name:<28}{t_py:>12.4f}{'-':>12}{'-':>10}")
            continue
        t_c, r_c = _best_of(lambda: run(_ckernels), args.repeat)
        same = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(r_py, r_c))
        flag = "" if same else "  (outputs differ!)"
        print(f"{name:<28}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x{flag}")


if __name__ == "__main__":
    main()
