from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from opticroute.errors import ConfigError
from opticroute.expr import Expression, parse


def test_density_expressions():
    e = parse("3e-5*x^2 + 0.01")
    assert e(10.0, 0.0) == pytest.approx(0.013)
    assert parse("0.5e-4*x**2 + 0.025")(0.0, 5.0) == pytest.approx(0.025)
    assert parse("-(x - 2)*(y + 1)/4")(4.0, 1.0) == pytest.approx(-1.0)
    assert parse("+x - -y")(1.0, 2.0) == 3.0


def test_constant_expression_broadcasts():
    X, Y = np.meshgrid(np.arange(3.0), np.arange(4.0), indexing="ij")
    out = parse("1")(X, Y)
    assert out.shape == (3, 4) and np.all(out == 1.0)


@pytest.mark.parametrize(
    "text",
    ["", "   ", "import os", "__import__('os')", "sin(x)", "x if y else 1", "z + 1", "x[0]", "x +", "x == y", "'a'", "True"],
)
def test_rejected_expressions(text):
    with pytest.raises(ConfigError):
        Expression(text)


def test_non_string_rejected():
    with pytest.raises(ConfigError):
        Expression(3.0)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_matches_python_arithmetic(x, y):
    e = parse("2*x^2 - 3*x*y + y/7 + 1.5")
    # Python's float power goes through libm pow, which can differ from numpy by an ulp
    assert float(e(x, y)) == pytest.approx(2 * x**2 - 3 * x * y + y / 7 + 1.5, rel=1e-14, abs=1e-14)
