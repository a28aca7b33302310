"""Waiting-time bounds, finiteness horizons, comparison and transport checks."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import delta_measure, gaussian, solve_pair
from radonhj.entropy_limit import RefinementSchedule, solve_measure_cauchy
from radonhj.errors import HypothesisViolated, RegimeMismatch
from radonhj.hamiltonian import classify_hypotheses, make_hamiltonian
from radonhj.measure_data import RadonMeasure1D
from radonhj.verifier import (
    FINE_K,
    TRANSPORT_CONSTANT,
    barrier_horizon,
    check_bounds,
    check_comparison,
    check_finiteness_h5,
    check_transport,
    horizon_time,
    lower_bound,
    measures_ordered,
    upper_bound,
)


@pytest.fixture(scope="module")
def exp_sin():
    return make_hamiltonian("exp_sin")


# -- analytic bounds -----------------------------------------------------------

def test_sin_bounds_coincide(sin_flux):
    assert lower_bound(1.0, sin_flux) == pytest.approx(0.5, abs=1e-9)
    assert upper_bound(1.0, sin_flux) == pytest.approx(0.5, abs=1e-9)
    assert upper_bound(-2.0, sin_flux) == pytest.approx(1.0, abs=1e-9)


def test_bounds_for_fluxes_with_limits(arctan_flux, zero_flux):
    assert upper_bound(1.0, arctan_flux) is None
    assert lower_bound(1.0, arctan_flux) == pytest.approx(1.0 / math.pi, rel=1e-9)
    assert lower_bound(1.0, make_hamiltonian("constant(0.5)")) == pytest.approx(1.0)
    assert lower_bound(1.0, zero_flux) == math.inf


def test_check_bounds_sin_pinch(sin_pinch, sin_flux):
    msol, hj = sin_pinch
    rep = check_bounds(msol, hj, sin_flux)
    (a,) = rep.atoms
    assert a.lower_ok and a.upper_ok and a.consistency_ok
    assert a.regime == "no-limit" and a.prediction == "finite"
    assert a.outcome == "extinguished" and a.horizon_source == "oscillation"
    assert a.bracket.contains(0.5)
    assert rep.passed
    table = rep.summary_table("sin")
    assert table.splitlines()[0] == "sin" and "PASS" in table


def test_check_bounds_constant_flux():
    h = make_hamiltonian("constant(0.5)")
    msol, hj = solve_pair(h, delta_measure(1.0), 2.0, 400)
    (a,) = check_bounds(msol, hj, h).atoms
    assert a.outcome == "not extinguished by T"
    assert a.prediction == "unknown" and a.regime == "eventually-constant"
    assert a.passed


def test_check_bounds_flags_inconsistent_jump(sin_pinch, sin_flux):
    msol, hj = sin_pinch
    broken = type(hj)(hj.x, hj.t, hj.U, hj.breakpoints, hj.U_minus, hj.U_plus + 0.1,
                      hj.U0, hj.brackets, hj.dx)
    (a,) = check_bounds(msol, broken, sin_flux).atoms
    assert not a.consistency_ok and not a.passed


# -- H5 horizon ---------------------------------------------------------------------

def test_h5_horizon_exp_sin(exp_sin):
    hz = check_finiteness_h5(exp_sin, 1.0)
    assert hz.horizon is not None and math.isfinite(hz.horizon)
    assert hz.c0 > 0
    hit = [e for e in hz.entries if e[2]]
    assert hit and min(e[1] for e in hit) == hz.horizon


@given(c=st.floats(1e-4, 4.0))
def test_h5_horizon_scales_with_mass(exp_sin, c):
    rep = classify_hypotheses(exp_sin)
    unit = check_finiteness_h5(exp_sin, 1.0, hypotheses=rep).horizon
    # without a regular part every candidate is proportional to |c|
    assert check_finiteness_h5(exp_sin, c, hypotheses=rep).horizon == pytest.approx(c * unit, rel=1e-12)


def test_h5_horizon_mirror_for_negative_mass(exp_sin):
    pos = check_finiteness_h5(exp_sin, 1.0).horizon
    assert check_finiteness_h5(exp_sin, -1.0).horizon == pytest.approx(pos, rel=1e-9)


@pytest.mark.parametrize("name", ["sin", "arctan", "constant(0.5)"])
def test_h5_regime_mismatch(name):
    with pytest.raises(RegimeMismatch):
        check_finiteness_h5(make_hamiltonian(name), 1.0)


def test_h5_rejects_zero_mass(exp_sin):
    with pytest.raises(ValueError):
        check_finiteness_h5(exp_sin, 0.0)


# -- barrier horizon ---------------------------------------------------------------

@pytest.mark.parametrize("mass", [1.0, -1.0])
def test_barrier_horizon_arctan_closed_form(arctan_flux, mass):
    # U0 is a pure step, so C_k = 0 and the bound is |c| / (pi/2 - arctan k)
    u0 = delta_measure(mass)
    assert barrier_horizon(arctan_flux, u0, 0) == pytest.approx(1.0 / math.atan(1.0 / FINE_K[0]), rel=1e-9)
    ks = np.linspace(0.1, 5.0, 50)
    assert barrier_horizon(arctan_flux, u0, 0, ks) == pytest.approx(1.0 / math.atan(10.0), rel=1e-9)


def test_barrier_horizon_needs_a_limit(sin_flux):
    assert barrier_horizon(sin_flux, delta_measure(1.0), 0) is None


def test_horizon_time_rule(sin_flux, arctan_flux):
    assert horizon_time(sin_flux, delta_measure(1.0)) == pytest.approx(2.0, abs=1e-8)
    assert horizon_time(make_hamiltonian("constant(0.5)"), delta_measure(1.0)) == pytest.approx(4.0)
    assert horizon_time(arctan_flux, delta_measure(1.0)) == pytest.approx(4.0 / math.atan(4.0), rel=1e-9)


# -- comparison -------------------------------------------------------------------

def _cmp_data(mass):
    return RadonMeasure1D.from_function(gaussian(0.3, 1.0), (-3.0, 3.0), 1601, atoms=[(0.0, mass)])


CMP = RefinementSchedule(n_cells=800, surrogate_factors=(20.0, 40.0))


@pytest.mark.parametrize("mu,mv", [(1.0, 1.0), (1.0, 2.0), (-1.0, 1.0)])
def test_comparison_fixtures(sin_flux, mu, mv):
    rep = check_comparison(_cmp_data(mu), _cmp_data(mv), sin_flux, 1.2, CMP)
    assert rep.passed, rep.as_dict()
    assert rep.equal_data == (mu == mv)
    if mu == mv:
        assert rep.max_difference == 0.0


def test_comparison_doubled_atom_decays_in_parallel(sin_flux):
    sched = RefinementSchedule(n_cells=800, surrogate_factors=(20.0, 40.0))
    v = solve_measure_cauchy(sin_flux, delta_measure(2.0), 1.2, sched).atoms[0]
    alive = v.t <= 1.0
    np.testing.assert_allclose(v.C[alive], 2.0 - 2.0 * v.t[alive], atol=1e-6)
    assert v.bracket.contains(1.0)


def test_comparison_rejects_unordered_data(sin_flux):
    with pytest.raises(HypothesisViolated):
        check_comparison(_cmp_data(2.0), _cmp_data(1.0), sin_flux, 0.5, CMP)


@given(shift=st.floats(-1.0, 1.0), mu=st.floats(-2, 2), mv=st.floats(-2, 2))
def test_measure_ordering(shift, mu, mv):
    masses = [m if m != 0 else 1e-3 for m in (mu, mv)]
    u = RadonMeasure1D.from_function(np.sin, (-1.0, 1.0), 21, atoms=[(0.0, masses[0])])
    v = RadonMeasure1D.from_function(lambda x: np.sin(x) + shift, (-1.0, 1.0), 21,
                                     atoms=[(0.0, masses[1])])
    # ordering is decided up to the documented atol of 1e-12
    expected = shift >= -1e-12 and masses[0] <= masses[1] + 1e-12
    assert measures_ordered(u, v) == expected


# -- transport ---------------------------------------------------------------------

def test_transport_oracle_within_frozen_constant():
    u0 = RadonMeasure1D.from_function(gaussian(0.5, 0.5), (-3.0, 4.0), 8001)
    rep = check_transport(u0, 0.02, 700, 1.0)
    assert rep.passed
    assert rep.bound == pytest.approx(TRANSPORT_CONSTANT * (rep.dx + rep.eps))


def test_transport_preconditions():
    with pytest.raises(HypothesisViolated):
        check_transport(delta_measure(0.5), 0.02, 200, 1.0)
    loud = RadonMeasure1D.from_function(gaussian(2.0, 0.5), (-3.0, 4.0), 801)
    with pytest.raises(HypothesisViolated):
        check_transport(loud, 0.02, 200, 1.0)
