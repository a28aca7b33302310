"""Viscous Dirichlet solver: monotone fluxes, balance laws and exact oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radonhj.errors import CFLViolation
from radonhj.hamiltonian import make_hamiltonian, mollify
from radonhj.measure_data import Piece, smooth_initial
from radonhj.viscous_solver import (
    CFL_SAFETY,
    FluxTable,
    GhostFlux,
    solve_viscous_cl,
    solve_viscous_hj,
    stable_dt,
)

FLUXES = ["sin", "arctan", "exp_sin", "clipped_quadratic(-2,2)", "clipped_linear(-1,1)"]


def _piece(fn, a, b, n=4001):
    g = np.linspace(a, b, n)
    return Piece(g, fn(g))


def _bump_primitive(amp, width, centre=0.0):
    """Primitive of amp * exp(-((x - centre) / width)^2)."""
    return lambda x: amp * width * math.sqrt(math.pi) / 2 * np.array(
        [math.erf((v - centre) / width) for v in np.atleast_1d(x)]
    )


# -- numerical fluxes ----------------------------------------------------------

@given(name=st.sampled_from(FLUXES), a=st.floats(-4, 4), b=st.floats(-4, 4), d=st.floats(0, 2))
def test_engquist_osher_is_monotone_and_consistent(name, a, b, d):
    t = FluxTable(make_hamiltonian(name, probe_range=1e3), 8.0, 1e-3)
    assert t.eo(a + d, b) >= t.eo(a, b) - 1e-12
    assert t.eo(a, b + d) <= t.eo(a, b) + 1e-12
    assert t.eo(a, a) == pytest.approx(t.flux(a), abs=1e-12)


@given(name=st.sampled_from(FLUXES), g=st.floats(-3, 3), u=st.floats(-4, 4), d=st.floats(0, 2))
def test_godunov_ghost_flux_is_monotone_and_bounded(name, g, u, d):
    t = FluxTable(make_hamiltonian(name, probe_range=1e3), 8.0, 1e-3)
    gf = GhostFlux(t, round(g, 3))
    lo, hi = float(t.H.min()), float(t.H.max())
    for val in (gf.ghost_left(u), gf.ghost_right(u)):
        assert lo - 1e-12 <= val <= hi + 1e-12
    # ghost on the left: flux nonincreasing in the right state, and vice versa
    assert gf.ghost_left(u + d) <= gf.ghost_left(u) + 1e-12
    assert gf.ghost_right(u + d) >= gf.ghost_right(u) - 1e-12
    assert gf.ghost_left(gf.g) == pytest.approx(t.flux(gf.g), abs=1e-12)


def test_godunov_flux_against_ghost_extremum():
    t = FluxTable(make_hamiltonian("sin"), 200.0, 1e-3)
    gf = GhostFlux(t, 160.0)
    # a large ghost on the left sees the maximum of sin between u and 160
    assert gf.ghost_left(0.0) == pytest.approx(1.0, abs=1e-6)
    assert gf.ghost_right(0.0) == pytest.approx(-1.0, abs=1e-6)


def test_stable_dt_formula():
    assert stable_dt(0.01, 2.0, 0.0) == pytest.approx(CFL_SAFETY * 0.005)
    assert stable_dt(0.01, 1.0, 0.5) == pytest.approx(CFL_SAFETY * 1e-4)


# -- balance laws ------------------------------------------------------------

def _bump_data(amp, width, eps, m1=0.0, m2=0.0, window=(-3.0, 3.0)):
    piece = _piece(_bump_primitive(amp, width), *window, n=2001)
    return smooth_initial(piece, m1, m2, eps, n_nodes=4001)


def test_heat_flow_conserves_mass():
    h = mollify(make_hamiltonian("zero"), 0.01)
    data = _bump_data(1.0, 0.3, 0.01)
    fld = solve_viscous_cl(h, data, 0.01, 0.5, 600)
    m = fld.mass()
    assert np.max(np.abs(m - m[0])) < 1e-10 * max(1.0, abs(m[0]))
    assert m[0] == pytest.approx(math.sqrt(math.pi) * 0.3, rel=1e-6)


@given(
    name=st.sampled_from(FLUXES),
    amp=st.floats(-2, 2),
    m1=st.floats(-2, 2),
    m2=st.floats(-2, 2),
)
def test_discrete_mass_balance_and_maximum_principle(name, amp, m1, m2):
    h = make_hamiltonian(name, probe_range=1e3)
    data = _bump_data(amp, 0.4, 0.02, m1, m2)
    fld = solve_viscous_cl(h, data, 0.02, 0.2, 120, n_snapshots=11)
    m = fld.mass()
    balance = fld.extras["boundary_flux_in"] - fld.extras["boundary_flux_out"]
    np.testing.assert_allclose(m - m[0], balance, atol=1e-10)
    lo = min(float(np.min(data.u0_eps)), m1, m2)
    hi = max(float(np.max(data.u0_eps)), m1, m2)
    assert fld.values.min() >= lo - 1e-9 and fld.values.max() <= hi + 1e-9


@given(name=st.sampled_from(FLUXES), amp=st.floats(-1.5, 1.5), gap=st.floats(0.0, 1.0))
def test_ordered_data_stay_ordered(name, amp, gap):
    h = make_hamiltonian(name, probe_range=1e3)
    u = _bump_data(amp, 0.4, 0.02, 0.5, -0.5)
    v = _bump_data(amp + gap, 0.4, 0.02, 0.5, -0.5)
    assert np.all(u.u0_eps <= v.u0_eps + 1e-12)
    fu = solve_viscous_cl(h, u, 0.02, 0.3, 120, n_snapshots=11)
    fv = solve_viscous_cl(h, v, 0.02, 0.3, 120, n_snapshots=11)
    assert np.all(fu.values <= fv.values + 1e-10)


@pytest.mark.parametrize("name", ["sin", "exp_sin", "clipped_quadratic(-2,2)"])
def test_l1_growth_bound(name):
    h = mollify(make_hamiltonian(name, probe_range=1e3), 0.01)
    data = _bump_data(1.0, 0.3, 0.01)
    fld = solve_viscous_cl(h, data, 0.01, 1.0, 600)
    l1 = np.sum(np.abs(fld.values), axis=1) * fld.dx
    assert np.all(l1 <= l1[0] + 2.0 * h.sup_norm * fld.t_grid + 1e-9)


def test_step_cap_raises_cfl_violation():
    h = make_hamiltonian("sin")
    data = _bump_data(1.0, 0.3, 0.01)
    with pytest.raises(CFLViolation):
        solve_viscous_cl(h, data, 0.01, 10.0, 2000, max_steps=100)


def test_bv_bounds_reported():
    h = make_hamiltonian("sin")
    fld = solve_viscous_cl(h, _bump_data(1.0, 0.3, 0.01), 0.01, 0.5, 300)
    bv = fld.extras["bv"]
    assert set(bv) == {"tv_max", "ut_l1_max", "eps_ux_max"}
    assert bv["tv_max"] >= np.sum(np.abs(np.diff(fld.values[0]))) - 1e-12
    assert bv["tv_max"] <= 2.0


# -- exact oracles -------------------------------------------------------------

def _riemann(ul, ur, n_cells, T=1.0):
    h = make_hamiltonian("clipped_quadratic(-2,2)", probe_range=1e3)
    dx = 4.0 / n_cells
    eps = 2.0 * dx
    piece = _piece(lambda x: np.where(x < 0, ul * x, ur * x), -2.0, 2.0, n=n_cells * 4 + 1)
    data = smooth_initial(piece, ul, ur, eps, n_nodes=n_cells * 4 + 1)
    return solve_viscous_cl(mollify(h, eps), data, eps, T, n_cells), eps


@pytest.mark.parametrize("n_cells", [400, 800])
def test_shock_moves_at_rankine_hugoniot_speed(n_cells):
    fld, eps = _riemann(1.0, 0.0, n_cells)
    u = fld.values[-1]
    # the profile is monotone, so the 1/2 level crossing is unique
    pos = float(np.interp(-0.5, -u, fld.x_grid))
    assert abs(pos - 0.5) <= 3.0 * (fld.dx + eps)


def test_shock_position_converges():
    errs = [abs(float(np.interp(-0.5, -f.values[-1], f.x_grid)) - 0.5)
            for f, _ in (_riemann(1.0, 0.0, n) for n in (200, 800))]
    assert errs[1] < errs[0]


def test_rarefaction_fan():
    fld, eps = _riemann(0.0, 1.0, 800)
    x, u = fld.x_grid, fld.values[-1]
    inside = (x > 0.2) & (x < 0.8)
    assert np.max(np.abs(u[inside] - x[inside])) < 0.05


def _transport(n_cells, T=1.0):
    h = make_hamiltonian("clipped_linear(-1,1)", probe_range=1e3)
    dx = 7.0 / n_cells
    eps = 2.0 * dx
    U0 = _bump_primitive(0.5, 0.5)
    data = smooth_initial(_piece(U0, -3.0, 4.0, n=8001), 0.0, 0.0, eps, n_nodes=8001)
    cl = solve_viscous_cl(mollify(h, eps), data, eps, T, n_cells)
    return cl, data, eps


def test_linear_transport_l1_error_shrinks():
    errs = []
    for n in (350, 700, 1400):
        cl, _, eps = _transport(n)
        exact = 0.5 * np.exp(-((cl.x_grid - 1.0) / 0.5) ** 2)
        errs.append(np.sum(np.abs(cl.values[-1] - exact)) * cl.dx)
    assert errs[0] > errs[1] > errs[2]


def test_viscous_hj_zero_flux_keeps_primitive():
    h = mollify(make_hamiltonian("zero"), 0.05)
    data = smooth_initial(_piece(lambda x: np.full_like(x, 1.5), -2.0, 2.0), 0.0, 0.0, 0.05)
    U = solve_viscous_hj(h, data, 0.05, 0.5, 200)
    np.testing.assert_allclose(U.values, np.broadcast_to(data.primitive_at(U.x_grid), U.values.shape),
                               atol=1e-14)
    assert np.all(U.values == 1.5)


def test_viscous_hj_characteristics():
    cl, data, eps = _transport(1400)
    U = solve_viscous_hj(None, data, eps, 1.0, 1400, cl=cl)
    U0 = _bump_primitive(0.5, 0.5)
    x = U.x_grid
    inside = (x > -1.0) & (x < 3.0)
    err = np.max(np.abs(U.values[-1][inside] - U0(x[inside] - 1.0)))
    assert err < 10.0 * (cl.dx + eps)


def test_viscous_hj_derivative_matches_u():
    cl, data, eps = _transport(700)
    U = solve_viscous_hj(None, data, eps, 1.0, 700, cl=cl)
    dUdx = np.diff(U.values, axis=1) / cl.dx
    ux = np.max(np.abs(np.diff(cl.values, axis=1))) / cl.dx
    assert np.max(np.abs(dUdx - cl.values)) <= 5.0 * cl.dx * ux
