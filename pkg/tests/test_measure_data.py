"""Measures with atoms, primitives and smoothed Dirichlet data."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from radonhj.errors import AnchorOnAtom, DomainTooNarrow
from radonhj.measure_data import (
    Atom,
    Piece,
    PiecewiseFunction,
    RadonMeasure1D,
    choose_window,
    derivative_measure,
    dumps,
    partition_of_unity,
    primitive_function,
    smooth_initial,
)


def _pieces(edges, fns, n=401):
    out = []
    for (a, b), fn in zip(zip(edges[:-1], edges[1:]), fns):
        g = np.linspace(a, b, n)
        out.append(Piece(g, fn(g)))
    return tuple(out)


# -- derivative_measure ------------------------------------------------------

def test_heaviside_gives_unit_atom():
    U0 = PiecewiseFunction((0.0,), _pieces([-1, 0, 1], [np.zeros_like, np.ones_like]))
    m = derivative_measure(U0)
    assert m.atoms == (Atom(0.0, 1.0),)
    assert np.max(np.abs(m.density)) < 1e-10


def test_smooth_primitive_gives_density_only():
    U0 = PiecewiseFunction((), _pieces([0, 3], [np.sin], n=3001))
    m = derivative_measure(U0)
    assert m.atoms == ()
    assert np.max(np.abs(m.density - np.cos(m.grid))) < 1e-5


def test_linear_plus_two_steps():
    U0 = PiecewiseFunction(
        (-1.0, 1.0),
        _pieces([-2, -1, 1, 2], [lambda x: x, lambda x: x - 1.0, lambda x: x + 1.0]),
    )
    m = derivative_measure(U0)
    assert [(a.x, a.mass) for a in m.atoms] == [(-1.0, -1.0), (1.0, 2.0)]
    np.testing.assert_allclose(m.density, 1.0, atol=1e-12)


# -- primitive_function ------------------------------------------------------

def test_primitive_of_delta_is_heaviside():
    u0 = RadonMeasure1D.from_function(None, (-2.0, 2.0), 401, atoms=[(0.0, 1.0)])
    U = primitive_function(u0, anchor=-1.0)
    assert U.breakpoints == (0.0,)
    x = np.array([-2.0, -1.0, -0.5, 0.5, 2.0])
    np.testing.assert_allclose(U(x), [0.0, 0.0, 0.0, 1.0, 1.0])
    assert U.jumps() == [1.0]


def test_primitive_of_unit_density_is_identity():
    u0 = RadonMeasure1D.from_function(lambda x: np.ones_like(x), (-1.0, 2.0), 301)
    U = primitive_function(u0, anchor=0.0)
    x = np.linspace(-1, 2, 31)
    np.testing.assert_allclose(U(x), x, atol=1e-12)


def test_anchor_on_atom_rejected():
    u0 = RadonMeasure1D.from_function(None, (-2.0, 2.0), 401, atoms=[(0.5, 1.0)])
    with pytest.raises(AnchorOnAtom):
        primitive_function(u0, anchor=0.5)


atom_sets = st.lists(
    st.tuples(st.floats(-2.5, 2.5), st.floats(0.2, 3.0), st.booleans()),
    min_size=3, max_size=3,
).filter(lambda a: min(abs(p[0] - q[0]) for i, p in enumerate(a) for q in a[i + 1:]) > 0.1)


@given(atoms=atom_sets, amp=st.floats(-2, 2), freq=st.floats(0.1, 3))
def test_round_trip_measure(atoms, amp, freq):
    atoms = sorted((x, m if pos else -m) for x, m, pos in atoms)
    u0 = RadonMeasure1D.from_function(lambda x: amp * np.sin(freq * x), (-3.0, 3.0), 1201, atoms=atoms)
    back = derivative_measure(primitive_function(u0), n=u0.grid.size)
    assert len(back.atoms) == 3
    for a, b in zip(u0.atoms, back.atoms):
        assert b.x == a.x
        assert b.mass == pytest.approx(a.mass, abs=1e-12)
    # second-order interior differences plus one-sided ends: O(dx) overall
    assert np.max(np.abs(back.density - u0.density)) <= 5.0 * u0.dx * (abs(amp) * freq ** 2 + 1e-9) + 1e-9


@given(shift=st.floats(-5, 5))
def test_primitive_of_derivative_recovers_up_to_constant(shift):
    U0 = PiecewiseFunction(
        (-1.0, 1.0),
        _pieces([-2, -1, 1, 2], [lambda x: x * x + shift, lambda x: x * x + shift + 3.0,
                                 lambda x: x * x + shift + 1.0], n=801),
    )
    m = derivative_measure(U0)
    U1 = primitive_function(m)
    x = np.linspace(-2, 2, 97)
    diff = U0(x) - U1(x)
    assert np.ptp(diff) < 1e-5


# -- RadonMeasure1D ----------------------------------------------------------

def test_measure_validation():
    g = np.linspace(0, 1, 11)
    with pytest.raises(ValueError):
        RadonMeasure1D(g, np.zeros(10))
    with pytest.raises(ValueError):
        RadonMeasure1D(g, np.zeros(11), (Atom(0.5, 0.0),))
    with pytest.raises(ValueError):
        RadonMeasure1D(g, np.zeros(11), (Atom(0.6, 1.0), Atom(0.5, 1.0)))
    with pytest.raises(ValueError):
        RadonMeasure1D(g, np.zeros(11), (Atom(1.5, 1.0),))


@given(
    dens=st.lists(st.floats(-10, 10), min_size=2, max_size=30),
    atom=st.floats(0.05, 0.95),
    mass=st.floats(0.1, 5.0),
)
def test_measure_json_round_trip(dens, atom, mass):
    grid = np.linspace(0.0, 1.0, len(dens))
    u0 = RadonMeasure1D(grid, np.array(dens), (Atom(atom, -mass),))
    back = RadonMeasure1D.from_json(json.loads(dumps(u0)))
    np.testing.assert_allclose(back.grid, u0.grid)
    np.testing.assert_array_equal(back.density, u0.density)
    assert back.atoms == u0.atoms
    assert back.singular_mass() == -mass


def test_cell_averages_exact_for_linear_density():
    u0 = RadonMeasure1D.from_function(lambda x: 2.0 * x + 1.0, (0.0, 1.0), 11)
    faces = np.linspace(0.0, 1.0, 8)
    centres = 0.5 * (faces[1:] + faces[:-1])
    np.testing.assert_allclose(u0.cell_averages(faces), 2.0 * centres + 1.0, atol=1e-13)
    assert u0.regular_mass() == pytest.approx(2.0)


def test_piecewise_function_rejects_zero_jump():
    with pytest.raises(ValueError):
        PiecewiseFunction((0.0,), _pieces([-1, 0, 1], [np.zeros_like, np.zeros_like]))


# -- smooth_initial ----------------------------------------------------------

def test_zero_data_stays_zero():
    piece = Piece(np.linspace(0, 1, 11), np.zeros(11))
    d = smooth_initial(piece, 0.0, 0.0, 0.01)
    assert np.max(np.abs(d.u0_eps)) == 0.0


def test_partition_plateaus():
    piece = Piece(np.linspace(0, 1, 101), np.linspace(0, 1, 101))
    d = smooth_initial(piece, 5.0, -3.0, 0.01, n_nodes=10001)
    x, u = d.x, d.u0_eps
    np.testing.assert_allclose(u[x <= 0.1], 5.0, atol=1e-12)
    np.testing.assert_allclose(u[(x >= 0.3) & (x <= 0.7)], 1.0, atol=1e-12)
    np.testing.assert_allclose(u[x >= 0.9], -3.0, atol=1e-12)
    assert d.U0_eps[0] == 0.0


@given(eps=st.floats(1e-4, 0.02), a=st.floats(-1, 1))
def test_partition_of_unity_sums_to_one(eps, a):
    x = np.linspace(a, a + 1.0, 2001)
    f1, f2, f3 = partition_of_unity(x, a, a + 1.0, eps)
    np.testing.assert_allclose(f1 + f2 + f3, 1.0, atol=1e-14)
    r = math.sqrt(eps)
    assert np.all(f1[x > a + 3 * r + 1e-12] == 0.0)
    assert np.all(f3[x < a + 1.0 - 4 * r - 1e-12] == 0.0)
    assert np.all((f2 >= -1e-15) & (f2 <= 1 + 1e-15))


def test_smoothed_data_converges_in_l1():
    g = np.linspace(0.0, 3.0, 3001)
    piece = Piece(g, np.sin(g))
    errs = []
    for eps in (1e-2, 1e-3, 1e-4):
        d = smooth_initial(piece, 2.0, -1.0, eps, n_nodes=60001)
        errs.append(np.trapezoid(np.abs(d.u0_eps - np.cos(d.x)), d.x))
    assert errs[0] > errs[1] > errs[2]


@given(m1=st.floats(-5, 5), m2=st.floats(-5, 5), eps=st.floats(1e-3, 0.02), freq=st.floats(0.1, 4))
def test_smoothed_data_sup_bound(m1, m2, eps, freq):
    g = np.linspace(0.0, 2.0, 801)
    piece = Piece(g, np.sin(freq * g) / freq)
    d = smooth_initial(piece, m1, m2, eps)
    bound = max(abs(m1), abs(m2), float(np.max(np.abs(piece.derivative()))))
    assert np.max(np.abs(d.u0_eps)) <= bound + 1e-12
    assert d.bounds["sup_u"] <= bound + 1e-12


def test_domain_too_narrow():
    piece = Piece(np.linspace(0, 0.5, 11), np.zeros(11))
    with pytest.raises(DomainTooNarrow):
        smooth_initial(piece, 1.0, 1.0, 0.01)


def test_choose_window_reaches_past_features():
    lo, hi = choose_window([-1.0, 2.0], speed=1.5, T=2.0, margin=0.5)
    assert (lo, hi) == (-4.5, 5.5)
