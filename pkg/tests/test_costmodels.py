from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from opticroute import costmodels as cm
from opticroute.errors import ConvergenceError, DomainError, ParameterError, StateError
from opticroute.field import FieldKind, GridSpec, ScalarField2D

# Minimiser of d^2/x in the quadrant, lam = 1, from 2-D quadrature of its
# density lam*exp(-lam*pi*r^2/8), r = (x^2+y^2)/x.  Closed forms 0.75*sqrt(2)
# and 6/pi; E[R] = sqrt(2).
QUAD_EX = 1.060660171779821
QUAD_ED2 = 1.909859317102744
QUAD_ER = math.sqrt(2.0)

# Same for cost d^2 + 1: the ratio-r region is a half disk of area
# (pi/2)(r^2/4 - 1), so the minimiser density is exp(-(pi/2)(r^2/4 - 1)).
ENERGY_EX = 1.4816211643092019
ENERGY_EC = 3.9098593171027476
ENERGY_RHO = 2.638906227372703


def test_d_opt_examples():
    assert cm.d_opt(1, 2, 1) == 1.0
    assert cm.d_opt(1, 2, 9) == 3.0
    assert cm.d_opt(2, 3, 4) == pytest.approx(1.0)
    assert cm.min_cost_per_meter(1, 2, 1) == 2.0


@pytest.mark.parametrize("args", [(1, 1, 1), (1, 0.5, 1), (0, 2, 1), (1, 2, 0)])
def test_d_opt_rejects(args):
    with pytest.raises(DomainError):
        cm.d_opt(*args)


def test_closed_form_models():
    assert cm.Bandwidth().evaluate(1.0) == pytest.approx(1.0, rel=1e-15)
    assert cm.Bandwidth().evaluate(0.04) == pytest.approx(5.0, rel=1e-15)
    assert cm.MinHop().evaluate(0.04) == pytest.approx(0.2, rel=1e-15)
    assert cm.Constant(3.0).evaluate(0.7) == 3.0
    lam = np.array([0.01, 0.1, 1.0])
    np.testing.assert_allclose(cm.evaluate(cm.Bandwidth(), lam), 1 / np.sqrt(lam), rtol=1e-15)


@given(st.floats(1e-6, 1e6))
def test_bandwidth_times_minhop_is_one(lam):
    assert cm.Bandwidth().evaluate(lam) * cm.MinHop().evaluate(lam) == pytest.approx(1.0, rel=1e-14)


@given(st.floats(1e-4, 1e4), st.floats(1e-4, 1e4))
def test_bandwidth_cost_decreases_with_density(l1, l2):
    b = cm.Bandwidth()
    if l1 < l2:
        assert b.evaluate(l1) >= b.evaluate(l2)


def test_models_reject_nonpositive_density():
    for m in (cm.Bandwidth(), cm.MinHop(), cm.Constant()):
        with pytest.raises(DomainError):
            m.evaluate(0.0)
        with pytest.raises(DomainError):
            m.evaluate(np.array([1.0, -1.0]))


def test_bandwidth_formulas_ratio():
    s = cm.bandwidth_hop_formulas(1.0)
    assert s.mean_progress == pytest.approx(1 / math.sqrt(2))
    assert s.mean_cost == pytest.approx(4 / math.pi)
    assert s.cost_per_meter == pytest.approx(cm.BANDWIDTH_NOMINAL)


def test_quadratic_hop_moments_match_quadrature():
    s = cm.sample_hops(1.0, 1.0, 2.0, 0.0, 200_000, seed=3).stats()
    assert abs(s.mean_progress - QUAD_EX) < 4 * s.se_progress
    assert abs(s.mean_cost - QUAD_ED2) < 4 * s.se_cost
    assert abs(s.mean_ratio - QUAD_ER) < 4 * s.se_ratio
    # the ratio of means is unaffected: 4*sqrt(2)/pi
    assert abs(s.cost_per_meter - cm.BANDWIDTH_NOMINAL) < 4 * s.se_cost_per_meter


def test_quadratic_ratio_is_rayleigh():
    h = cm.sample_hops(1.0, 1.0, 2.0, 0.0, 100_000, seed=11)
    ks = stats.kstest(h.ratio, lambda r: 1.0 - np.exp(-np.pi * r * r / 8.0))
    assert ks.statistic < 0.01


def test_density_scaling():
    s1 = cm.sample_hops(1.0, 1.0, 2.0, 0.0, 100_000, seed=5).stats()
    s4 = cm.sample_hops(4.0, 1.0, 2.0, 0.0, 100_000, seed=6).stats()
    ratio = s4.mean_progress / s1.mean_progress
    se = ratio * math.hypot(s4.se_progress / s4.mean_progress, s1.se_progress / s1.mean_progress)
    assert abs(ratio - 0.5) < 4 * se


def test_energy_moments_match_quadrature():
    s = cm.energy_cost_mc(1.0, 1.0, 2.0, 1.0, 100_000, seed=2)
    assert abs(s.mean_progress - ENERGY_EX) < 4 * s.se_progress
    assert abs(s.mean_cost - ENERGY_EC) < 4 * s.se_cost
    assert abs(s.cost_per_meter - ENERGY_RHO) < 4 * s.se_cost_per_meter


def test_energy_high_density_limit():
    s = cm.energy_cost_mc(1e4, 1.0, 2.0, 1.0, 10_000, seed=0)
    assert s.cost_per_meter == pytest.approx(2.0, rel=0.02)
    assert s.cost_per_meter >= 2.0 - 4 * s.se_cost_per_meter


def test_energy_mc_needs_enough_trials():
    with pytest.raises(ParameterError):
        cm.energy_cost_mc(1.0, 1, 2, 1, n_trials=9_999)


def test_sample_hops_validation():
    with pytest.raises(DomainError):
        cm.sample_hops(0.0, 1, 2, 0, 10, 0)
    with pytest.raises(ParameterError):
        cm.sample_hops(1.0, 1, 1, 0, 10, 0)


def test_hop_trials_are_keyed_per_trial():
    a = cm.sample_hops(0.3, 1, 2, 1, 500, seed=9)
    b = cm.sample_hops(0.3, 1, 2, 1, 200, seed=9)
    assert np.array_equal(a.x[:200], b.x) and np.array_equal(a.cost[:200], b.cost)
    c = cm.sample_hops(0.3, 1, 2, 1, 200, seed=10)
    assert not np.array_equal(b.x, c.x)


@given(st.floats(1e-3, 1e3), st.floats(1.2, 4.0), st.floats(0.0, 5.0))
@settings(max_examples=25, deadline=None)
def test_hop_minimiser_is_certified(lam, b, c):
    h = cm.sample_hops(lam, 1.0, b, c, 50, seed=1)
    assert np.all(h.x > 0) and np.all(h.y >= 0)
    assert np.all(h.levels >= 0)
    np.testing.assert_allclose(h.cost, h.distance**b + c, rtol=1e-12)
    if c > 0:
        assert np.all(h.ratio >= cm.min_cost_per_meter(1.0, b, c) * (1 - 1e-12))


def test_energy_model_needs_table():
    m = cm.Energy(1, 2, 1)
    with pytest.raises(StateError):
        m.evaluate(1.0)
    with pytest.raises(ParameterError):
        cm.Energy(1, 2, 0)
    with pytest.raises(ParameterError):
        cm.Energy(1, 7, 1)


def test_energy_model_normalised_at_anchor():
    m = cm.Energy(1, 2, 1).build_table(0.01, 1.0, n_points=12)
    assert m.evaluate(cm.ANCHOR_DENSITY) == pytest.approx(1.0, rel=0.03)
    # cost per meter falls with density toward its positive limit
    assert m.evaluate(0.01) > m.evaluate(1.0) > 2.0 / m.c_nominal * 0.98
    with pytest.raises(DomainError):
        m.evaluate(10.0)


def test_energy_table_round_trip(tmp_path):
    m = cm.Energy(1, 2, 1).build_table(0.1, 1.0, n_points=5, seed=4)
    p = m.table.write_csv(tmp_path / "t.csv")
    assert p.read_text().splitlines()[0] == "lambda,cost,std_error"
    assert cm.EnergyTable.read_csv(p) == m.table


def test_tabulated_interpolation():
    t = cm.Tabulated([0.01, 0.1, 1.0], [10.0, 3.0, 1.0])
    assert t.evaluate(0.1) == 3.0
    assert t.evaluate(math.sqrt(0.1 * 1.0)) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        t.evaluate(2.0)
    with pytest.raises(ParameterError):
        cm.Tabulated([1.0, 0.5], [1.0, 1.0])


def test_model_from_dict():
    assert isinstance(cm.cost_model_from_dict({"type": "bandwidth"}), cm.Bandwidth)
    assert cm.cost_model_from_dict({"type": "min-hop", "c_nominal": 2}).c_nominal == 2.0
    assert cm.cost_model_from_dict({"type": "energy", "a": 1, "b": 2, "c": 9}).d_opt == 3.0
    with pytest.raises(ParameterError, match="missing"):
        cm.cost_model_from_dict({"type": "energy", "a": 1})
    with pytest.raises(ParameterError, match="unknown"):
        cm.cost_model_from_dict({"type": "laser"})


def test_build_cost_field_reports_grid_node():
    spec = GridSpec.from_extent(0, 4, 0, 4, 1.0)
    dens = ScalarField2D.from_function(spec, lambda x, y: 0.1 + 0.1 * x + 0 * y, FieldKind.DENSITY)
    f = cm.build_cost_field(dens, cm.Bandwidth())
    assert f.kind == FieldKind.COST
    np.testing.assert_allclose(f.values, 1 / np.sqrt(dens.values))
    with pytest.raises(DomainError, match=r"grid node \(4, "):
        cm.build_cost_field(dens, cm.Tabulated([0.05, 0.45], [2.0, 1.0]))



@pytest.mark.parametrize("c", [5e-324, 1e-300, 1e-13])
def test_negligible_constant_cost_behaves_like_zero(c):
    tiny = cm.sample_hops(1.0, 1.0, 3.0, c, 200, seed=4)
    zero = cm.sample_hops(1.0, 1.0, 3.0, 0.0, 200, seed=4)
    np.testing.assert_array_equal(tiny.x, zero.x)
    assert np.all(tiny.ratio >= cm.min_cost_per_meter(1.0, 3.0, c))
    assert math.isfinite(cm.min_cost_per_meter(1.0, 3.0, c))
