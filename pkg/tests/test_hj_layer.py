"""Hamilton-Jacobi reconstruction and its correspondence with the measure solution."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import delta_measure, gaussian, loglog_slope, solve_pair
from radonhj.errors import BreakpointMismatch
from radonhj.hamiltonian import make_hamiltonian
from radonhj.hj_layer import (
    bump_battery,
    check_correspondence,
    jump_decay_check,
    reconstruct_hj,
    supersolution_check,
    tail_gap,
    time_lipschitz_violation,
)
from radonhj.measure_data import Piece, PiecewiseFunction, RadonMeasure1D, primitive_function

FULL = (20.0, 40.0, 80.0, 160.0)


def test_zero_flux_keeps_primitive(zero_flux):
    u0 = RadonMeasure1D.from_function(np.sin, (-2.0, 2.0), 801, atoms=[(0.0, 1.0)])
    msol, hj = solve_pair(zero_flux, u0, 0.5, 400)
    assert np.max(np.abs(hj.U - hj.U[0])) == 0.0
    np.testing.assert_allclose(hj.jumps, 1.0)
    rep = check_correspondence(msol, hj)
    assert rep.jump_vs_mass == 0.0
    assert rep.distributional < 1e-5


def test_sin_pinch_jump_decays_linearly(sin_pinch):
    msol, hj = sin_pinch
    J = hj.jump_series(0)
    early = hj.t <= 0.5
    assert np.max(np.abs(J[early] - (1.0 - 2.0 * hj.t[early]))) < 1e-6
    assert np.max(np.abs(J[~early])) < 1e-9


@pytest.mark.parametrize("fixture", ["sin_pinch", "sin_pinch_negative"])
def test_jump_equals_atom_mass(request, fixture):
    msol, hj = request.getfixturevalue(fixture)
    rep = check_correspondence(msol, hj)
    assert rep.jump_vs_mass < 1e-9
    assert rep.derivative_max < 1e-9
    np.testing.assert_allclose(hj.jumps[0], [a.c for a in msol.atoms])


def test_distributional_residual_second_order(sin_flux):
    res, sizes = [], []
    for n in (500, 1000):
        u0 = RadonMeasure1D.from_function(gaussian(1.0, 0.5), (-3.0, 3.0), 2 * n + 1)
        msol, hj = solve_pair(sin_flux, u0, 0.8, n, factors=(20.0,))
        res.append(check_correspondence(msol, hj).distributional)
        sizes.append(msol.dx)
    assert loglog_slope(res, sizes) >= 0.8


def test_breakpoint_mismatch(sin_pinch):
    msol, _ = sin_pinch
    g1, g2 = np.linspace(-2, 0.5, 11), np.linspace(0.5, 2, 11)
    wrong = PiecewiseFunction((0.5,), (Piece(g1, np.zeros(11)), Piece(g2, np.ones(11))))
    with pytest.raises(BreakpointMismatch):
        reconstruct_hj(msol, wrong)


def test_sin_jump_decay_equality_regime(sin_pinch, sin_flux):
    _, hj = sin_pinch
    (rep,) = jump_decay_check(hj, sin_flux)
    assert rep.gap == pytest.approx(2.0, abs=1e-6)
    assert abs(rep.slack) < 1e-6
    assert rep.passed and rep.sign_constant and rep.nonincreasing


@pytest.mark.parametrize("name", ["arctan", "constant(0.5)"])
def test_vacuous_decay_bound(name):
    h = make_hamiltonian(name)
    _, hj = solve_pair(h, delta_measure(1.0), 1.0, 600, factors=FULL)
    (rep,) = jump_decay_check(hj, h)
    assert rep.gap == pytest.approx(0.0, abs=1e-9)
    assert rep.passed
    if name.startswith("constant"):
        np.testing.assert_allclose(hj.jump_series(0), 1.0)


def test_tail_gap_values(sin_flux, arctan_flux):
    assert tail_gap(sin_flux, 1) == pytest.approx(2.0, abs=1e-6)
    assert tail_gap(arctan_flux, -1) == pytest.approx(0.0, abs=1e-9)


def test_supersolution_planes_dominate_exp_sin():
    h = make_hamiltonian("exp_sin")
    _, hj = solve_pair(h, delta_measure(1.0), 1.0, 1000, factors=FULL)
    rep = supersolution_check(hj, h, 0)
    assert rep.applicable and len(rep.ks) > 0
    assert rep.passed
    assert rep.growth_violation <= rep.tol


def test_supersolution_not_applicable_without_limit(sin_pinch, sin_flux):
    _, hj = sin_pinch
    rep = supersolution_check(hj, sin_flux, 0)
    assert not rep.applicable and rep.passed


def test_time_lipschitz_smooth_data(sin_flux):
    u0 = RadonMeasure1D.from_function(gaussian(1.0, 0.5), (-3.0, 3.0), 2001)
    _, hj = solve_pair(sin_flux, u0, 0.8, 1000, factors=(20.0,))
    assert time_lipschitz_violation(hj, sin_flux) < 1e-9


def test_time_lipschitz_excursion_shrinks_with_viscosity(sin_flux):
    out = [time_lipschitz_violation(solve_pair(sin_flux, delta_measure(1.0), 0.6, n)[1], sin_flux)
           for n in (500, 1000, 2000)]
    assert out[0] > out[1] > out[2]


@given(window=st.tuples(st.floats(-5, -1), st.floats(1, 5)), t_end=st.floats(0.1, 3.0))
def test_bump_battery_inside_domain(window, t_end):
    for xc, rx, tc, rt in bump_battery(window, (0.0, t_end)):
        assert window[0] <= xc - rx and xc + rx <= window[1]
        assert 0.0 <= tc - rt and tc + rt <= t_end


def test_json_report(sin_pinch):
    _, hj = sin_pinch
    out = json.loads(json.dumps(hj.to_json({"ok": True}, stride=10)))
    (jump,) = out["jumps"]
    assert jump["x"] == 0.0 and jump["J_series"][0] == 1.0
    assert jump["tau_bracket"]["extinguished"]
    assert out["residuals"] == {"ok": True}


def test_csv_snapshot(tmp_path, sin_pinch):
    _, hj = sin_pinch
    path = tmp_path / "U.csv"
    hj.to_csv(path, stride=50)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,U"
    assert len(lines) > 10
