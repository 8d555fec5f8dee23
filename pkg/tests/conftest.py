from __future__ import annotations

import numpy as np
import pytest

from opticroute import _pykernels, costmodels, eikonal, microsim

try:
    from opticroute import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = ["python"] + (["cython"] if _ckernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    mod = _pykernels if request.param == "python" else _ckernels
    for user in (costmodels, eikonal, microsim):
        monkeypatch.setattr(user, "kernels", mod)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
