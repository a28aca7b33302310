"""Shared fixtures and hypothesis profile for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from radonhj.entropy_limit import RefinementSchedule, solve_measure_cauchy
from radonhj.hamiltonian import make_hamiltonian
from radonhj.hj_layer import reconstruct_hj
from radonhj.measure_data import RadonMeasure1D, primitive_function

settings.register_profile(
    "radonhj",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("radonhj")


@pytest.fixture(scope="session")
def sin_flux():
    return make_hamiltonian("sin")


@pytest.fixture(scope="session")
def arctan_flux():
    return make_hamiltonian("arctan")


@pytest.fixture(scope="session")
def zero_flux():
    return make_hamiltonian("zero")


def delta_measure(mass: float, window=(-2.0, 2.0), nodes: int = 2001) -> RadonMeasure1D:
    return RadonMeasure1D.from_function(None, window, nodes, atoms=[(0.0, mass)])


def solve_pair(h, u0: RadonMeasure1D, T: float, n_cells: int, factors=(20.0, 40.0)):
    """Measure solution and its HJ reconstruction anchored at the window start."""
    sched = RefinementSchedule(n_cells=n_cells, surrogate_factors=factors)
    msol = solve_measure_cauchy(h, u0, T, sched)
    return msol, reconstruct_hj(msol, primitive_function(u0))


@pytest.fixture(scope="session")
def sin_pinch(sin_flux):
    """sin flux, unit atom at 0, N = 1000, up to T = 0.6."""
    return solve_pair(sin_flux, delta_measure(1.0), 0.6, 1000)


@pytest.fixture(scope="session")
def sin_pinch_negative(sin_flux):
    return solve_pair(sin_flux, delta_measure(-1.0), 0.6, 1000)


def gaussian(amplitude: float, width: float):
    return lambda x: amplitude * np.exp(-((x / width) ** 2))


def l1(a: np.ndarray, dx: float) -> float:
    return float(np.sum(np.abs(a)) * dx)


def loglog_slope(errors, sizes) -> float:
    return math.log(errors[0] / errors[1]) / math.log(sizes[0] / sizes[1])
