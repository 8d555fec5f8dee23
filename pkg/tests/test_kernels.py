from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from opticroute import _pykernels
from opticroute.costmodels import _level_schedule

_ckernels = pytest.importorskip("opticroute._ckernels")


def _fmm_case(seed, n=(23, 31)):
    rng = np.random.default_rng(seed)
    cost = rng.uniform(0.3, 3.0, n)
    T0 = np.zeros(n)
    frozen = np.zeros(n, dtype=bool)
    i, j = rng.integers(0, n[0]), rng.integers(0, n[1])
    frozen[i, j] = True
    return cost, T0, frozen


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("seed", range(5))
def test_fmm_parity(order, seed):
    cost, T0, frozen = _fmm_case(seed)
    a, na = _pykernels.fmm_march(cost, 0.7, T0, frozen, order)
    b, nb = _ckernels.fmm_march(cost, 0.7, T0, frozen, order)
    assert na == nb == cost.size
    assert np.array_equal(a, b)


def test_fmm_region_source_parity():
    n = (40, 40)
    cost = np.ones(n)
    frozen = np.zeros(n, dtype=bool)
    frozen[10:15, 20:30] = True
    T0 = np.zeros(n)
    a, _ = _pykernels.fmm_march(cost, 1.0, T0, frozen)
    b, _ = _ckernels.fmm_march(cost, 1.0, T0, frozen)
    assert np.array_equal(a, b)
    assert np.all(a[frozen] == 0)


@pytest.mark.parametrize("params", [(1.0, 1.0, 2.0, 0.0), (0.2, 1.0, 2.0, 9.0), (5.0, 0.5, 3.0, 1.0)])
def test_hop_trials_parity(params):
    lam, a, b, c = params
    sched = _level_schedule(lam, a, b, c)
    ra = _pykernels.hop_trials(7, 100, 400, a, b, c, *sched)
    rb = _ckernels.hop_trials(7, 100, 400, a, b, c, *sched)
    for u, v in zip(ra, rb):
        assert np.array_equal(u, v)


def _random_graph(seed, n=60):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 10, size=(n, 2))
    d = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1))
    u, v = np.nonzero((d < 2.5) & (d > 0))
    # integer-valued weights produce many exact ties
    w = np.round(d[u, v] ** 2)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(u, minlength=n), out=indptr[1:])
    return indptr, v.astype(np.int64), w


@pytest.mark.parametrize("seed", range(8))
def test_dijkstra_parity(seed):
    g = _random_graph(seed)
    ra = _pykernels.dijkstra(*g, 0, 59)
    rb = _ckernels.dijkstra(*g, 0, 59)
    assert ra[0] == rb[0] or (np.isinf(ra[0]) and np.isinf(rb[0]))
    assert ra[1] == rb[1]
    assert np.array_equal(ra[2], rb[2])


def test_frozen_values_are_kept():
    n = (5, 5)
    T0 = np.zeros(n)
    frozen = np.zeros(n, dtype=bool)
    frozen[0, 0] = frozen[4, 4] = True
    T0[4, 4] = -50.0
    for k in (_pykernels, _ckernels):
        T, _ = k.fmm_march(np.ones(n), 1.0, T0, frozen)
        assert T[4, 4] == -50.0


def test_pure_python_switch():
    env = dict(os.environ, OPTICROUTE_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import opticroute; print(opticroute.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
    env["OPTICROUTE_PURE_PYTHON"] = "0"
    out = subprocess.run(
        [sys.executable, "-c", "import opticroute; print(opticroute.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "cython"
