from __future__ import annotations

import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opticroute.errors import DomainError, ParameterError
from opticroute.field import (
    FieldKind,
    GridSpec,
    ScalarField2D,
    Trajectory,
    cumulative_line_integral,
    line_integral,
    max_abs_coordinate,
    mean_abs_coordinate,
    read_field_csv,
    read_polylines_csv,
    read_trajectory_csv,
    write_field_csv,
    write_polylines_csv,
    write_trajectory_csv,
)

SPEC = GridSpec.from_extent(0.0, 10.0, -5.0, 5.0, 0.5)


def linear_field(a=0.3, b=-0.2, c=4.0, spec=SPEC):
    return ScalarField2D.from_function(spec, lambda x, y: a * x + b * y + c, FieldKind.COST)


def test_grid_from_extent_covers_rectangle():
    g = GridSpec.from_extent(-1.0, 2.0, 0.0, 1.0, 0.25)
    assert (g.nx, g.ny) == (13, 5)
    assert g.x_max == 2.0 and g.y_max == 1.0
    assert g.contains(2.0, 1.0) and not g.contains(2.01, 1.0)


def test_grid_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        GridSpec(0.0, 0.0, 1, 5, 1.0)
    with pytest.raises(ParameterError):
        GridSpec(0.0, 0.0, 5, 5, 0.0)
    with pytest.raises(ParameterError):
        GridSpec.from_extent(0.0, 0.0, 0.0, 1.0, 0.1)


def test_field_is_immutable():
    f = linear_field()
    with pytest.raises(AttributeError):
        f.kind = FieldKind.DENSITY
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_positivity_enforced_for_density_and_cost():
    vals = np.ones(SPEC.shape)
    vals[3, 4] = 0.0
    with pytest.raises(DomainError, match=r"\(3, 4\)"):
        ScalarField2D(SPEC, vals, FieldKind.DENSITY)
    ScalarField2D(SPEC, vals, FieldKind.EIKONAL)
    with pytest.raises(DomainError):
        ScalarField2D(SPEC, -vals, FieldKind.EIKONAL)


def test_shape_mismatch():
    with pytest.raises(ParameterError):
        ScalarField2D(SPEC, np.ones((3, 3)), FieldKind.COST)


@given(st.floats(0.0, 10.0), st.floats(-5.0, 5.0))
def test_bilinear_reproduces_linear_functions(x, y):
    f = linear_field()
    assert f.sample((x, y)) == pytest.approx(0.3 * x - 0.2 * y + 4.0, abs=1e-12)


def test_constant_field_sampling_is_exact():
    f = ScalarField2D.constant(SPEC, 0.1, FieldKind.COST)
    pts = np.random.default_rng(0).uniform([0, -5], [10, 5], size=(200, 2))
    assert np.all(f.sample_many(pts) == 0.1)


def test_sampling_outside_raises():
    f = linear_field()
    with pytest.raises(DomainError):
        f.sample((10.5, 0.0))
    with pytest.raises(DomainError):
        f.sample_many([[1.0, 1.0], [1.0, 6.0]])


def test_gradient_of_linear_field():
    f = linear_field()
    gx, gy = f.gradient((3.3, 1.1))
    assert gx == pytest.approx(0.3, abs=1e-12)
    assert gy == pytest.approx(-0.2, abs=1e-12)
    g = f.gradient_many([[3.3, 1.1], [5.0, -2.0]])
    np.testing.assert_allclose(g, [[0.3, -0.2], [0.3, -0.2]], atol=1e-12)


def test_gradient_needs_margin():
    with pytest.raises(DomainError, match="gradient"):
        linear_field().gradient((0.2, 0.0))


def test_trajectory_validation():
    with pytest.raises(ParameterError):
        Trajectory(np.array([[0.0, 0.0]]))
    with pytest.raises(ParameterError):
        Trajectory(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]))
    t = Trajectory.from_points([[0, 0], [1, 0], [1, 0], [1, 2]])
    assert len(t.points) == 3 and t.arc_length == 3.0
    # a single repeated point is the degenerate zero-length route
    assert Trajectory(np.array([[1.0, 1.0], [1.0, 1.0]])).arc_length == 0.0


def test_trajectory_helpers():
    a = Trajectory.from_points([[0, 0], [3, 4]])
    b = Trajectory.from_points([[3, 4], [3, 10]])
    ab = a.concat(b)
    assert ab.arc_length == 11.0
    assert ab.reversed().start == (3.0, 10.0)
    with pytest.raises(ParameterError):
        b.concat(a)


def test_line_integral_constant_and_linear():
    c = ScalarField2D.constant(SPEC, 2.5, FieldKind.COST)
    t = Trajectory.from_points([[1, -1], [4, 3]])
    assert line_integral(c, t) == pytest.approx(12.5, rel=1e-14)
    assert t.optical_length == pytest.approx(12.5, rel=1e-14)
    # midpoint rule is exact for linear integrands: int_0^8 (0.3x + 4) dx
    f = linear_field()
    t2 = Trajectory.from_points([[0, 0], [8, 0]])
    assert line_integral(f, t2) == pytest.approx(0.15 * 64 + 32, rel=1e-13)


def test_line_integral_outside_domain():
    with pytest.raises(DomainError):
        line_integral(linear_field(), Trajectory.from_points([[1, 1], [12, 1]]))


polylines = st.lists(
    st.tuples(st.floats(0.5, 9.5), st.floats(-4.5, 4.5)), min_size=2, max_size=8, unique=True
)


@given(polylines)
@settings(max_examples=60, deadline=None)
def test_line_integral_additive_and_reversible(pts):
    f = linear_field()
    try:
        t = Trajectory.from_points(pts)
    except ParameterError:
        return
    total = line_integral(f, t)
    parts = sum(line_integral(f, Trajectory.from_points(t.points[k:k + 2])) for k in range(len(t.points) - 1))
    assert total == pytest.approx(parts, rel=1e-12, abs=1e-12)
    assert line_integral(f, t.reversed()) == pytest.approx(total, rel=1e-12, abs=1e-12)
    assert cumulative_line_integral(f, t)[-1] == total


def test_abs_coordinate_metrics():
    t = Trajectory.from_points([[-1, 0], [3, 0]])
    # int |x| over [-1, 3] = 0.5 + 4.5
    assert mean_abs_coordinate(t) == pytest.approx(5.0 / 4.0)
    assert max_abs_coordinate(t) == 3.0
    t2 = Trajectory.from_points([[2, 0], [2, 5], [4, 5]])
    assert mean_abs_coordinate(t2) == pytest.approx((2 * 5 + 3 * 2) / 7)


def test_field_csv_round_trip(tmp_path, rng):
    f = ScalarField2D(SPEC, rng.lognormal(size=SPEC.shape), FieldKind.DENSITY)
    p = write_field_csv(f, tmp_path / "f.csv")
    assert p.read_text().splitlines()[0] == "x,y,value"
    g = read_field_csv(p)
    assert g == f
    write_field_csv(g, tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_bytes() == p.read_bytes()


def test_trajectory_csv_round_trip(tmp_path):
    f = linear_field()
    t = Trajectory.from_points([[0.1, 0.2], [3.3, 1.0 / 3.0], [7.7, -2.9]])
    line_integral(f, t)
    p = write_trajectory_csv(t, tmp_path / "t.csv", f)
    back = read_trajectory_csv(p)
    assert back == t
    rows = p.read_text().splitlines()
    assert rows[0] == "seq,x,y,s,optical_length_so_far"
    assert float(rows[-1].split(",")[3]) == t.arc_length


def test_polylines_round_trip(tmp_path, rng):
    lines = [rng.normal(size=(5, 2)), rng.normal(size=(2, 2)), rng.normal(size=(9, 2))]
    back = read_polylines_csv(write_polylines_csv(lines, tmp_path / "p.csv"))
    assert len(back) == 3
    assert all(np.array_equal(a, b) for a, b in zip(lines, back))
    assert read_polylines_csv(write_polylines_csv([], tmp_path / "e.csv")) == []


def test_field_pickles():
    f = linear_field()
    assert pickle.loads(pickle.dumps(f)) == f
