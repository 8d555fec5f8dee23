from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opticroute.errors import DomainError, ParameterError
from opticroute.field import FieldKind, GridSpec, ScalarField2D, Trajectory, line_integral
from opticroute.raytrace import integrate, shoot


def field(fn, h=0.5, lo=-20.0, hi=20.0):
    spec = GridSpec.from_extent(lo, hi, lo, hi, h)
    return ScalarField2D.from_function(spec, fn, FieldKind.COST)


def const(c=1.0, h=0.5):
    return field(lambda x, y: c + 0 * x, h)


def test_straight_ray_in_constant_field():
    d = (0.6, 0.8)
    ray = integrate(const(2.0), (-5.0, -5.0), d, 0.25, 10.0)
    assert ray.end == pytest.approx((1.0, 3.0), abs=1e-12)
    assert ray.arc_length == pytest.approx(10.0, abs=1e-12)
    assert ray.optical_length == pytest.approx(20.0, abs=1e-9)


def test_ray_leaving_domain_stops_on_boundary():
    ray = integrate(const(), (0.0, 0.0), (1.0, 0.0), 0.25, 100.0)
    assert ray.end == pytest.approx((20.0, 0.0))


@given(st.floats(0.15, 2.9), st.floats(0.005, 0.03))
@settings(max_examples=20, deadline=None)
def test_horizontal_momentum_conserved_when_cost_depends_on_y(theta, slope):
    cost = field(lambda x, y: 1.0 + slope * (y + 20.0) + 0 * x)
    _, states = integrate(cost, (0.0, -15.0), (math.cos(theta), math.sin(theta)), 0.25, 25.0, return_states=True)
    px = np.array([s.p[0] for s in states])
    assert np.max(np.abs(px - px[0])) <= 1e-6 * max(1.0, abs(px[0]))


def test_integrate_parameter_errors():
    c = const()
    with pytest.raises(ParameterError):
        integrate(c, (0, 0), (1.0, 1.0), 0.25, 5.0)
    with pytest.raises(ParameterError):
        integrate(c, (0, 0), (1.0, 0.0), 0.3, 5.0)
    with pytest.raises(ParameterError):
        integrate(c, (0, 0), (1.0, 0.0), 0.25, 0.0)
    with pytest.raises(DomainError):
        integrate(c, (19.8, 0), (1.0, 0.0), 0.25, 5.0)


def test_shoot_hits_target_in_constant_field():
    A, B = (-10.0, -4.0), (9.0, 11.0)
    ray = shoot(const(), A, B)
    assert ray.end == B and ray.start == A
    assert ray.optical_length == pytest.approx(math.dist(A, B), abs=0.1)
    d = np.subtract(B, A) / math.dist(A, B)
    n = np.array([-d[1], d[0]])
    assert np.max(np.abs((ray.points - A) @ n)) <= 0.05 + 1e-9


@pytest.mark.parametrize("use_eikonal", [True, False])
def test_shoot_beats_straight_line_in_graded_medium(use_eikonal):
    cost = field(lambda x, y: 1.0 / (0.2 + 0.05 * (x + 20.0)) + 0 * y)
    A, B = (0.0, -15.0), (0.0, 15.0)
    ray = shoot(cost, A, B, use_eikonal=use_eikonal)
    straight = line_integral(cost, Trajectory.from_points([A, B]))
    assert ray.optical_length < 0.95 * straight
    assert ray.points[:, 0].max() > 3.0
    assert ray.end == B


def test_shoot_tolerance_and_domain():
    c = const()
    with pytest.raises(ParameterError):
        shoot(c, (0, 0), (5, 5), tol=0.01)
    with pytest.raises(DomainError):
        shoot(c, (0, 0), (25, 5))


def test_shoot_degenerate_target():
    ray = shoot(const(), (1.0, 1.0), (1.0, 1.0))
    assert ray.arc_length == 0.0 and ray.optical_length == 0.0


def test_free_space_ray_has_no_lateral_drift():
    ray = integrate(const(h=1.0, c=1.0), (-18.0, 0.0), (1.0, 0.0), 0.5, 30.0)
    assert np.max(np.abs(ray.points[:, 1])) < 1e-9


def test_ray_bends_toward_higher_cost_gradient():
    cost = field(lambda x, y: 1.0 + 0.1 * (y + 20.0) + 0 * x)
    ray = integrate(cost, (-10.0, -10.0), (math.sqrt(0.5), math.sqrt(0.5)), 0.25, 12.0)
    d = ray.points[-1] - ray.points[-2]
    assert math.atan2(d[1], d[0]) > math.pi / 4


def test_step_halving_is_fourth_order():
    # a linear cost is reproduced exactly by the interpolant, so the ray
    # equation sees a smooth field
    cost = field(lambda x, y: 2.0 + 0.03 * x + 0.02 * y, h=1.0)
    ends = [integrate(cost, (-12.0, -12.0), (0.6, 0.8), ds, 20.0).end for ds in (0.5, 0.25, 0.125)]
    first = math.dist(ends[0], ends[1])
    second = math.dist(ends[1], ends[2])
    assert second <= 0.1 * first


@pytest.mark.parametrize("B", [(8.0, 12.0), (-12.0, 10.0), (14.0, -6.0)])
def test_shoot_matches_eikonal_value(B):
    from opticroute.eikonal import PointSource, solve
    cost = field(lambda x, y: 1.0 + 0.3 * np.exp(-((x - 2.0) ** 2 + y**2) / 40.0))
    A = (-6.0, -8.0)
    ray = shoot(cost, A, B)
    S = solve(cost, PointSource(A)).S.sample(B)
    assert abs(ray.optical_length - S) / S <= 0.02
