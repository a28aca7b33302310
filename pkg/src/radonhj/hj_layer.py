"""Discontinuous viscosity solutions reconstructed from measure solutions.

The Hamilton-Jacobi field is never solved for directly. At a regular face

    U(x_{i+1/2}, t) = U0(x_{i+1/2}) - int_0^t F_{i+1/2}(s) ds

with F the full numerical flux (viscous part included), so that
differences of U across a cell reproduce the cell mass exactly. Cell-centre
values average the two faces. The one-sided values at an atom use the
integrated one-sided fluxes of the split face,

    U(x_j^+, t) = U0(x_j^+) - int_0^t f_plus,
    U(x_j^-, t) = U0(x_j^-) - int_0^t f_minus,

so the jump ``J_t = U(x_j^+) - U(x_j^-)`` equals the atom mass ``C_j(t)``
up to roundoff. After extinction the face carries the ordinary numerical
flux on both sides and the jump stays at zero.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .entropy_limit import MeasureSolution, WaitingBracket
from .errors import BreakpointMismatch
from .hamiltonian import HamiltonianSpec, bump
from .measure_data import PiecewiseFunction

log = logging.getLogger(__name__)


@dataclass(eq=False)
class HJSolution:
    """U at cell centres plus one-sided values and jumps at every breakpoint."""

    x: np.ndarray
    t: np.ndarray
    U: np.ndarray  # (time, cell)
    breakpoints: Tuple[float, ...]
    U_minus: np.ndarray  # (time, breakpoint)
    U_plus: np.ndarray
    U0: PiecewiseFunction
    brackets: List[Optional[WaitingBracket]] = field(default_factory=list)
    dx: float = 0.0

    @property
    def jumps(self) -> np.ndarray:
        """J_t(x_j) at every snapshot, shape (time, breakpoint)."""
        return self.U_plus - self.U_minus

    def jump_series(self, j: int) -> np.ndarray:
        return self.jumps[:, j]

    def to_json(self, residuals: Optional[dict] = None, stride: int = 1) -> dict:
        idx = np.unique(np.append(np.arange(0, self.t.size, stride), self.t.size - 1))
        out = {
            "jumps": [
                {
                    "x": float(xj),
                    "t": self.t[idx].tolist(),
                    "J_series": self.jumps[idx, j].tolist(),
                    "tau_bracket": None if self.brackets[j] is None else self.brackets[j].as_dict(),
                }
                for j, xj in enumerate(self.breakpoints)
            ],
        }
        if residuals is not None:
            out["residuals"] = residuals
        return out

    def to_csv(self, path, stride: int = 1) -> None:
        """Write (t, x, U) rows, keeping every ``stride``-th level and cell."""
        with open(path, "w") as fh:
            fh.write("t,x,U\n")
            for ti in range(0, self.t.size, stride):
                for xi in range(0, self.x.size, stride):
                    fh.write(f"{self.t[ti]:.10g},{self.x[xi]:.10g},{self.U[ti, xi]:.12g}\n")


def reconstruct_hj(msol: MeasureSolution, U0: PiecewiseFunction) -> HJSolution:
    """Face-flux quadrature of U, averaged to cell centres, plus breakpoint traces.

    Raises
    ------
    BreakpointMismatch
        If ``U0`` does not jump exactly where ``msol`` has atoms (within half
        a cell, the snapping distance) or its jumps differ from the masses.
    """
    xs = msol.atom_x
    dx = msol.dx
    if len(U0.breakpoints) != len(xs):
        raise BreakpointMismatch(f"{len(U0.breakpoints)} breakpoints vs {len(xs)} atoms")
    for j, (b, xa) in enumerate(zip(U0.breakpoints, xs)):
        if abs(b - xa) > 0.5 * dx + 1e-12:
            raise BreakpointMismatch(f"breakpoint {b} does not match atom at {xa}")
        c = msol.atoms[j].c
        J0 = U0.jumps()[j]
        if abs(J0 - c) > 1e-9 * max(1.0, abs(c)):
            raise BreakpointMismatch(f"jump {J0} at {b} differs from atom mass {c}")
    nb = len(xs)
    U_minus = np.empty((msol.t.size, nb))
    U_plus = np.empty((msol.t.size, nb))
    Uf = U0(msol.faces)[None, :] - msol.face_int
    Uf_left = Uf.copy()
    for j, f in enumerate(msol.atom_faces):
        face = msol.face_int[:, f]
        U_plus[:, j] = U0.right_value(j) - face
        U_minus[:, j] = U0.left_value(j) - (face - msol.fplus_int[:, j] + msol.fminus_int[:, j])
        Uf[:, f] = U_plus[:, j]
        Uf_left[:, f] = U_minus[:, j]
    U = 0.5 * (Uf[:, :-1] + Uf_left[:, 1:])
    return HJSolution(
        x=msol.x, t=msol.t, U=U, breakpoints=tuple(xs), U_minus=U_minus, U_plus=U_plus,
        U0=U0, brackets=[a.bracket for a in msol.atoms], dx=dx,
    )


# ---------------------------------------------------------------------------
# correspondence
# ---------------------------------------------------------------------------

def _dbump(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi ** 2)) * (-2.0 * xi / (1.0 - xi ** 2) ** 2)
    return out


@dataclass(frozen=True)
class CorrespondenceReport:
    distributional: float
    jump_vs_mass: float
    derivative_max: float
    derivative_l1: float
    n_tests: int

    def as_dict(self) -> dict:
        return {
            "distributional": self.distributional,
            "jump_vs_mass": self.jump_vs_mass,
            "derivative_max": self.derivative_max,
            "derivative_l1": self.derivative_l1,
            "n_tests": self.n_tests,
        }


def bump_battery(window: Tuple[float, float], t_range: Tuple[float, float],
                 radii: Sequence[float] = (0.5, 1.0)) -> List[Tuple[float, float, float, float]]:
    """(x centre, x radius, t centre, t radius) of tensor bumps inside the window."""
    a, b = window
    t0, t1 = t_range
    rt = 0.5 * (t1 - t0)
    out = []
    for r in radii:
        if 2 * r >= b - a:
            continue
        for xc in np.arange(a + r, b - r + 1e-12, r / 2.0):
            out.append((float(xc), float(r), t0 + rt, rt))
    return out


def check_correspondence(
    msol: MeasureSolution,
    hj: HJSolution,
    battery: Optional[Sequence[Tuple[float, float, float, float]]] = None,
    margin_cells: int = 2,
) -> CorrespondenceReport:
    """Residuals of U_x = u for a matched pair.

    (a) ``max |iint U rho' h + int <u(t), rho> h|`` over tensor bumps, with
    ``<u, rho>`` including the atoms; (b) ``max_t |J_t - C_t|``; (c) the
    centred difference of U against the mean of neighbouring cell values,
    away from breakpoints (max and L1 over the window, worst snapshot).
    """
    x, t, dx = msol.x, msol.t, msol.dx
    if battery is None:
        battery = bump_battery((float(msol.faces[0]), float(msol.faces[-1])), (float(t[0]), float(t[-1])))
    C = msol.atom_mass_at_snapshots()
    xa = np.asarray(msol.atom_x)
    worst = 0.0
    for xc, rx, tc, rt in battery:
        rho = bump((x - xc) / rx)
        drho = _dbump((x - xc) / rx) / rx
        ht = bump((t - tc) / rt)
        lhs = hj.U @ drho * dx
        pair = msol.u @ rho * dx
        if xa.size:
            pair = pair + C @ bump((xa - xc) / rx)
        worst = max(worst, abs(float(np.trapezoid((lhs + pair) * ht, t))))
    jm = float(np.max(np.abs(hj.jumps - C))) if xa.size else 0.0

    keep = np.ones(x.size - 1, dtype=bool)
    for f in msol.atom_faces:
        keep[max(0, f - 1 - margin_cells):min(x.size - 1, f + margin_cells)] = False
    dU = np.diff(hj.U, axis=1) / dx
    mid = 0.5 * (msol.u[:, 1:] + msol.u[:, :-1])
    err = np.abs(dU - mid)[:, keep]
    dmax = float(np.max(err)) if err.size else 0.0
    dl1 = float(np.max(err.sum(axis=1) * dx)) if err.size else 0.0
    return CorrespondenceReport(worst, jm, dmax, dl1, len(battery))


# ---------------------------------------------------------------------------
# jump checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpReport:
    x: float
    J0: float
    gap: float
    slack: float
    sign_constant: bool
    nonincreasing: bool
    passed: bool

    def as_dict(self) -> dict:
        return {"x": self.x, "J0": self.J0, "gap": self.gap, "slack": self.slack,
                "sign_constant": self.sign_constant, "nonincreasing": self.nonincreasing,
                "passed": self.passed}


def tail_gap(h: HamiltonianSpec, sign: int) -> float:
    """limsup minus liminf of H at the infinity matching ``sign``."""
    a = h.asymptotics
    return a.hstar_plus - a.hlow_plus if sign > 0 else a.hstar_minus - a.hlow_minus


def jump_decay_check(hj: HJSolution, h: HamiltonianSpec, tol: float = 1e-9) -> List[JumpReport]:
    """|J_{t1}| <= |J_{t0}| - gap (t1 - t0) for sampled t0 < t1 before extinction.

    Equivalently ``g(t) = |J_t| + gap t`` is nonincreasing; the slack is
    ``min over t1 of [min_{t0 < t1} g(t0) - g(t1)]`` (negative means violated).
    """
    out = []
    for j, xj in enumerate(hj.breakpoints):
        J = hj.jumps[:, j]
        J0 = float(J[0])
        s = 1 if J0 > 0 else -1
        gap = tail_gap(h, s)
        br = hj.brackets[j] if j < len(hj.brackets) else None
        t_stop = br.t_lo if (br is not None and br.extinguished) else math.inf
        live = hj.t <= t_stop
        tj, Jl = hj.t[live], J[live]
        scale = tol * max(1.0, abs(J0))
        sign_ok = bool(np.all(s * Jl >= -scale))
        mono_ok = bool(np.all(np.diff(np.abs(Jl)) <= scale))
        if tj.size >= 2:
            g = np.abs(Jl) + gap * (tj - tj[0])
            prior_min = np.minimum.accumulate(g)[:-1]
            slack = float(np.min(prior_min - g[1:]))
        else:
            slack = 0.0
        out.append(JumpReport(float(xj), J0, gap, slack, sign_ok, mono_ok,
                              sign_ok and mono_ok and slack >= -scale))
    return out


def time_lipschitz_violation(hj: HJSolution, h: HamiltonianSpec) -> float:
    """Largest excursion of (U(t2) - U(t1))/(t2 - t1) outside [-sup H, -inf H].

    The bound holds in the inviscid limit. The reconstruction carries the
    viscous part of the face flux, so inside steep layers the excursion is
    of order ``eps * |u_x|`` and shrinks under grid refinement.
    """
    dt = np.diff(hj.t)
    ok = dt > 0
    q = np.diff(hj.U, axis=0)[ok] / dt[ok, None]
    over = np.maximum(q - (-h.inf_value), 0.0)
    under = np.maximum((-h.sup_value) - q, 0.0)
    return float(max(np.max(over, initial=0.0), np.max(under, initial=0.0)))


@dataclass(frozen=True)
class SupersolutionReport:
    applicable: bool
    ks: Tuple[float, ...]
    plane_violation: float
    trace_violation: float
    growth_violation: float
    tol: float

    @property
    def passed(self) -> bool:
        return (not self.applicable) or (
            self.plane_violation <= self.tol
            and self.trace_violation <= self.tol
            and self.growth_violation <= self.tol
        )

    def as_dict(self) -> dict:
        return {"applicable": self.applicable, "ks": list(self.ks),
                "plane_violation": self.plane_violation, "trace_violation": self.trace_violation,
                "growth_violation": self.growth_violation, "tol": self.tol, "passed": self.passed}


def supersolution_check(
    hj: HJSolution,
    h: HamiltonianSpec,
    j: int,
    k_candidates: Optional[Sequence[float]] = None,
    tol: Optional[float] = None,
    max_planes: int = 8,
) -> SupersolutionReport:
    """Plane barriers right of a positive jump and the one-sided growth bound.

    For ``k`` with ``H(k) > H^+`` the plane ``v = C_k + k(x - x_j) - H(k) t``,
    with ``C_k`` the least constant putting ``v(., 0)`` above ``U0`` on
    ``[x_j, b]``, must dominate U right of the jump, including the one-sided
    value ``U(x_j^+, t)``, until extinction. Independently,
    ``U(x_j^-, t) >= U0(x_j^-) - H^+ t``. Only positive jumps under a flux
    with a limit at ``+inf`` are tested.
    """
    hplus = h.limits.hplus
    J0 = float(hj.jumps[0, j])
    tol = 10.0 * hj.dx * max(1.0, h.lip_norm) if tol is None else tol
    if hplus is None or J0 <= 0:
        return SupersolutionReport(False, (), 0.0, 0.0, 0.0, tol)
    xj = hj.breakpoints[j]
    br = hj.brackets[j] if j < len(hj.brackets) else None
    t_stop = br.t_lo if (br is not None and br.extinguished) else math.inf
    live = hj.t <= t_stop
    t = hj.t[live]

    growth = float(np.max((hj.U0.left_value(j) - hplus * t) - hj.U_minus[live, j], initial=0.0))

    ks = np.asarray(k_candidates if k_candidates is not None else np.linspace(1.0, 40.0, 3901))
    Hk = h.eval(ks)
    good = ks[Hk > hplus + 1e-12 * max(1.0, abs(hplus))]
    if good.size > max_planes:
        good = good[np.linspace(0, good.size - 1, max_planes).astype(int)]
    right = hj.x > xj
    xr = hj.x[right]
    U0r = np.concatenate([[hj.U0.right_value(j)], hj.U0(xr)])
    xr0 = np.concatenate([[xj], xr])
    plane_v = trace_v = 0.0
    for k in good:
        Ck = float(np.max(U0r - k * (xr0 - xj)))
        Hkk = float(h.eval(np.array([k]))[0])
        v = Ck + k * (xr[None, :] - xj) - Hkk * t[:, None]
        plane_v = max(plane_v, float(np.max(hj.U[live][:, right] - v, initial=0.0)))
        trace_v = max(trace_v, float(np.max(hj.U_plus[live, j] - (Ck - Hkk * t), initial=0.0)))
    return SupersolutionReport(True, tuple(float(k) for k in good), plane_v, trace_v, growth, tol)
