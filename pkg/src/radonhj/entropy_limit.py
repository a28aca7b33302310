"""Measure-valued entropy solutions with singular boundary conditions.

Atoms are never smeared into density peaks. Each atom sits on a face of a
single global grid; the face is *split*: the cell on its left sees a
singular boundary at the signed surrogate ``sign(c) * k`` on its right, the
cell on its right sees the same surrogate on its left, and the atom mass is
advanced with the difference of the two one-sided face fluxes,

    C(t) = c - int_0^t [f_plus - f_minus] ds.

A positive atom therefore acts as an infinite reservoir (``+inf``) for both
neighbouring sub-intervals and a negative one as an infinite sink. Because
the split face transfers nothing between its two neighbours, sub-intervals
evolve independently until the atom lands at zero mass, at which point the
face becomes an ordinary interior face (the restart of the decomposition
with one discontinuity fewer).

Infinity is realized by the surrogate sequence ``k_n``; the run is accepted
when the waiting-time bracket and the interior field stop moving between
consecutive surrogates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    MonotonicityViolation,
    NegativeMassOvershoot,
    NotConverged,
    WindowTooNarrow,
)
from .hamiltonian import HamiltonianSpec, bump
from .measure_data import Atom, Piece, RadonMeasure1D
from .viscous_solver import (
    Boundary,
    FluxTable,
    GridField,
    MarchResult,
    SplitFace,
    march,
)

log = logging.getLogger(__name__)

SURROGATE_FACTORS = (20.0, 40.0, 80.0, 160.0)
#: magnitude (relative to |c|) below which a landed atom counts as zero
LANDING_TOL = 1e-9


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularBC:
    """Boundary value +-infinity (or none) and the finite surrogates realizing it."""

    side: str
    value: Optional[float]
    realized_sequence: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        seq = tuple(float(v) for v in self.realized_sequence)
        object.__setattr__(self, "realized_sequence", seq)
        if self.value is None:
            return
        if not math.isinf(self.value):
            raise ValueError("singular boundary value must be +inf, -inf or None")
        if not seq:
            raise ValueError("a singular boundary needs a nonempty surrogate sequence")
        s = 1.0 if self.value > 0 else -1.0
        signed = np.asarray(seq) * s
        if np.any(signed <= 0) or np.any(np.diff(signed) <= 0):
            raise ValueError("surrogates must move strictly monotonically toward the signed infinity")

    @classmethod
    def toward(cls, side: str, sign: int, scale: float = 1.0,
               factors: Sequence[float] = SURROGATE_FACTORS) -> "SingularBC":
        s = 1.0 if sign > 0 else -1.0
        return cls(side, s * math.inf, tuple(s * f * scale for f in factors))

    @property
    def sign(self) -> int:
        if self.value is None:
            return 0
        return 1 if self.value > 0 else -1


@dataclass(frozen=True, eq=False)
class TraceSeries:
    """One-sided weak flux trace at ``location``; ``side`` is +1 for x^+, -1 for x^-.

    ``kind="step"`` series hold one value per time step, constant on
    ``[t_grid[i], t_grid[i+1])`` with the last step ending at ``t_end``;
    ``kind="nodal"`` series hold values at snapshot times.
    """

    location: float
    side: int
    t_grid: np.ndarray
    values: np.ndarray
    window_width: float
    error: Optional[np.ndarray] = None
    kind: str = "step"
    t_end: Optional[float] = None

    def cumulative(self) -> Tuple[np.ndarray, np.ndarray]:
        """(times, integral of the trace from t_grid[0] up to each time)."""
        if self.kind == "step":
            t_end = self.t_grid[-1] if self.t_end is None else self.t_end
            edges = np.append(self.t_grid, t_end)
            cum = np.concatenate([[0.0], np.cumsum(self.values * np.diff(edges))])
            return edges, cum
        t, v = self.t_grid, self.values
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(t))])
        return t, cum

    def to_json(self, stride: int = 1) -> dict:
        out = {
            "location": self.location,
            "side": self.side,
            "kind": self.kind,
            "window_width": self.window_width,
            "t": self.t_grid[::stride].tolist(),
            "values": self.values[::stride].tolist(),
        }
        if self.error is not None:
            out["error"] = self.error[::stride].tolist()
        if self.t_end is not None:
            out["t_end"] = self.t_end
        return out


@dataclass(frozen=True)
class WaitingBracket:
    """Extinction bracket; ``extinguished=False`` means "not extinguished by T"."""

    t_lo: float
    t_hi: float
    extinguished: bool
    tol_mass: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_lo + self.t_hi) if self.extinguished else math.inf

    @property
    def label(self) -> str:
        if self.extinguished:
            return f"[{self.t_lo:.6g}, {self.t_hi:.6g}]"
        return f">= {self.t_lo:.6g}"

    def contains(self, t: float, slack: float = 0.0) -> bool:
        return self.extinguished and self.t_lo - slack <= t <= self.t_hi + slack

    def as_dict(self) -> dict:
        return {
            "t_lo": self.t_lo,
            "t_hi": self.t_hi if self.extinguished else None,
            "extinguished": self.extinguished,
            "tol_mass": self.tol_mass,
            "label": self.label,
        }


@dataclass(frozen=True, eq=False)
class AtomTrajectory:
    """Mass series of one atom, sampled at every solver step."""

    x: float
    c: float
    t: np.ndarray
    C: np.ndarray
    T: float
    bracket: Optional[WaitingBracket] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        C = np.asarray(self.C, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "C", C)
        if t.shape != C.shape or t.ndim != 1 or t.size == 0:
            raise ValueError("t and C must be 1-D arrays of equal nonzero length")
        if np.any(np.diff(t) < 0):
            raise ValueError("times must be nondecreasing")
        if self.c == 0.0:
            raise ValueError("initial mass must be nonzero")

    def mass_at(self, times) -> np.ndarray:
        return np.interp(times, self.t, self.C)

    def to_json(self, stride: int = 1) -> dict:
        idx = np.unique(np.append(np.arange(0, self.t.size, stride), self.t.size - 1))
        return {
            "x": self.x,
            "c": self.c,
            "t": self.t[idx].tolist(),
            "C_series": self.C[idx].tolist(),
            "bracket": None if self.bracket is None else self.bracket.as_dict(),
        }


@dataclass(frozen=True)
class RefinementSchedule:
    """Discretization and acceptance parameters of a singular solve.

    ``eps = eps_factor * L_H * dx`` ties the physical viscosity to the grid.
    Surrogates are ``factor * max(1, sup|u0r|)`` for each factor.
    """

    n_cells: int = 4000
    surrogate_factors: Tuple[float, ...] = SURROGATE_FACTORS
    eps_factor: float = 2.0
    tol_conv: float = 1e-2
    bracket_tol: float = 1e-2
    n_snapshots: int = 201
    table_delta: float = 1e-3
    interior_fraction: float = 0.02
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError("n_cells must be at least 8")
        f = np.asarray(self.surrogate_factors, dtype=float)
        if f.size == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise ValueError("surrogate factors must be positive and increasing")
        if self.eps_factor < 0 or self.tol_conv <= 0 or self.bracket_tol <= 0:
            raise ValueError("tolerances must be positive")

    def as_dict(self) -> dict:
        return {
            "n_cells": self.n_cells,
            "surrogate_factors": list(self.surrogate_factors),
            "eps_factor": self.eps_factor,
            "tol_conv": self.tol_conv,
            "bracket_tol": self.bracket_tol,
            "n_snapshots": self.n_snapshots,
            "table_delta": self.table_delta,
            "interior_fraction": self.interior_fraction,
        }


# ---------------------------------------------------------------------------
# waiting time
# ---------------------------------------------------------------------------

def default_tol_mass(c: float, dx: float, u0r_sup: float) -> float:
    """Resolution-level mass tolerance max(1e-3 |c|, 10 dx sup|u0r|)."""
    return max(1e-3 * abs(c), 10.0 * dx * u0r_sup)


def check_monotone(C: np.ndarray, c: float, atol: Optional[float] = None) -> None:
    """Raise :class:`MonotonicityViolation` if |C| grows or C changes sign."""
    atol = 1e-12 * abs(c) if atol is None else atol
    s = np.sign(c) * np.asarray(C, dtype=float)
    if np.any(s < -atol):
        i = int(np.argmax(s < -atol))
        raise MonotonicityViolation(f"mass changes sign at sample {i}")
    if np.any(np.diff(s) > atol):
        i = int(np.argmax(np.diff(s) > atol))
        raise MonotonicityViolation(f"|C| increases between samples {i} and {i + 1}")


def waiting_time(traj: AtomTrajectory, tol_mass: Optional[float] = None) -> WaitingBracket:
    """Bracket the extinction time of an atom.

    ``t_lo`` is the last sample with ``|C| > tol_mass`` and ``t_hi`` the
    first sample with ``|C| <= tol_mass``. Without a zero sample the
    bracket is ``>= T``. The default tolerance is a roundoff level, which
    is meaningful because the solver lands atoms exactly at zero.
    """
    check_monotone(traj.C, traj.c)
    tol = LANDING_TOL * abs(traj.c) if tol_mass is None else float(tol_mass)
    small = np.abs(traj.C) <= tol
    if not np.any(small):
        return WaitingBracket(traj.T, math.inf, False, tol)
    i = int(np.argmax(small))
    if i == 0:
        return WaitingBracket(float(traj.t[0]), float(traj.t[0]), True, tol)
    return WaitingBracket(float(traj.t[i - 1]), float(traj.t[i]), True, tol)


# ---------------------------------------------------------------------------
# solution container
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MeasureSolution:
    """Cell averages of u_r plus atom trajectories and one-sided traces.

    All snapshot arrays are indexed ``[time, cell]`` (or ``[time, face]``).
    ``atom_faces[j]`` is the face carrying atom ``j``.
    """

    flux_name: str
    u0: RadonMeasure1D
    faces: np.ndarray
    t: np.ndarray
    u: np.ndarray
    G: np.ndarray
    face_int: np.ndarray
    fplus_int: np.ndarray
    fminus_int: np.ndarray
    atom_faces: Tuple[int, ...]
    atoms: List[AtomTrajectory]
    traces: List[TraceSeries]
    edge_flux_int: np.ndarray  # (time, 2): cumulative flux through the window edges
    eps: float
    dt: float
    surrogate: float
    schedule: RefinementSchedule
    runs: List[dict] = field(default_factory=list)
    residuals: Dict[str, object] = field(default_factory=dict)
    extrapolated_waiting: List[Optional[float]] = field(default_factory=list)
    bv: Dict[str, float] = field(default_factory=dict)
    max_abs_face_flux: float = 0.0
    max_jump: float = 0.0
    t0: float = 0.0

    # -- geometry ------------------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        return 0.5 * (self.faces[1:] + self.faces[:-1])

    @property
    def dx(self) -> float:
        return float(self.faces[1] - self.faces[0])

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def atom_x(self) -> List[float]:
        return [float(self.faces[f]) for f in self.atom_faces]

    def field(self) -> GridField:
        meta = {
            "flux": self.flux_name, "eps": self.eps, "dx": self.dx, "dt": self.dt,
            "surrogate": self.surrogate, "scheme_id": "split-face",
        }
        return GridField(self.x, self.t, self.u, meta)

    # -- decomposition -----------------------------------------------------
    def epochs(self) -> List[Tuple[float, float, Tuple[int, ...]]]:
        """(start, end, indices of atoms alive throughout) for each epoch."""
        cuts = sorted({
            a.bracket.t_hi for a in self.atoms
            if a.bracket is not None and a.bracket.extinguished and a.bracket.t_hi < self.T
        })
        edges = [self.t0] + cuts + [self.T]
        out = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            alive = tuple(
                j for j, a in enumerate(self.atoms)
                if a.bracket is None or not a.bracket.extinguished or a.bracket.t_hi >= hi
            )
            out.append((lo, hi, alive))
        return out

    def subfield(self, j: int, epoch: int = 0) -> GridField:
        """u_r on the j-th sub-interval between the atoms alive in ``epoch``."""
        lo, hi, alive = self.epochs()[epoch]
        cuts = [0] + [self.atom_faces[a] for a in alive] + [self.faces.size - 1]
        if not 0 <= j < len(cuts) - 1:
            raise IndexError("sub-interval index out of range")
        c0, c1 = cuts[j], cuts[j + 1]
        tm = (self.t >= lo - 1e-14) & (self.t <= hi + 1e-14)
        meta = {"epoch": epoch, "interval": (float(self.faces[c0]), float(self.faces[c1]))}
        return GridField(self.x[c0:c1], self.t[tm], self.u[tm][:, c0:c1], meta)

    # -- functionals ---------------------------------------------------------
    def atom_mass_at_snapshots(self) -> np.ndarray:
        if not self.atoms:
            return np.zeros((self.t.size, 0))
        return np.stack([a.mass_at(self.t) for a in self.atoms], axis=1)

    def total_mass(self) -> np.ndarray:
        """int u_r dx + sum_j C_j at every snapshot."""
        return self.u.sum(axis=1) * self.dx + self.atom_mass_at_snapshots().sum(axis=1)

    def conservation_defect(self) -> np.ndarray:
        """Total mass minus its initial value, corrected for window-edge fluxes."""
        m = self.total_mass()
        inflow = self.edge_flux_int[:, 0] - self.edge_flux_int[:, 1]
        return m - m[0] - inflow

    def state_at(self, i: int) -> Tuple[np.ndarray, List[Atom]]:
        """Cell averages and surviving atoms at snapshot ``i`` (restart data)."""
        masses = self.atom_mass_at_snapshots()[i]
        atoms = [Atom(self.atom_x[j], float(m)) for j, m in enumerate(masses) if m != 0.0]
        return self.u[i].copy(), atoms

    def trace(self, j: int, side: int) -> TraceSeries:
        for tr in self.traces:
            if tr.side == side and abs(tr.location - self.atom_x[j]) <= 1e-12 * max(1.0, abs(tr.location)):
                return tr
        raise KeyError(f"no trace for atom {j} side {side}")

    def to_json(self, trace_stride: int = 1, atom_stride: int = 1) -> dict:
        return {
            "flux": self.flux_name,
            "grid": {"a": float(self.faces[0]), "b": float(self.faces[-1]), "n_cells": int(self.faces.size - 1)},
            "eps": self.eps,
            "dt": self.dt,
            "surrogate": self.surrogate,
            "schedule": self.schedule.as_dict(),
            "atoms": [a.to_json(atom_stride) for a in self.atoms],
            "traces": [tr.to_json(trace_stride) for tr in self.traces],
            "runs": self.runs,
            "residuals": self.residuals,
            "extrapolated_waiting": self.extrapolated_waiting,
        }


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _eps_for(h: HamiltonianSpec, dx: float, schedule: RefinementSchedule) -> float:
    return schedule.eps_factor * h.lip_norm * dx


def _interior_mask(n_cells: int, cut_faces: Sequence[int], frac: float,
                   singular_ends: Tuple[bool, bool] = (False, False)) -> np.ndarray:
    """Cells farther than ``frac * n_cells`` (at least 4) from singular faces."""
    m = max(4, int(round(frac * n_cells)))
    keep = np.ones(n_cells, dtype=bool)
    for f in cut_faces:
        keep[max(0, f - m):min(n_cells, f + m)] = False
    if singular_ends[0]:
        keep[:m] = False
    if singular_ends[1]:
        keep[-m:] = False
    return keep


def _field_l1_gap(u_a: np.ndarray, u_b: np.ndarray, mask: np.ndarray, dx: float) -> float:
    """max over snapshots of ||u_a - u_b||_L1 / max(||u_b||_L1, 1) on the mask."""
    diff = np.abs(u_a[:, mask] - u_b[:, mask]).sum(axis=1) * dx
    scale = np.maximum(np.abs(u_b[:, mask]).sum(axis=1) * dx, 1.0)
    return float(np.max(diff / scale))


def _snap_atoms(u0: RadonMeasure1D, faces: np.ndarray) -> Tuple[List[int], List[float]]:
    a, dx = faces[0], faces[1] - faces[0]
    idx, offsets = [], []
    for atom in u0.atoms:
        f = int(round((atom.x - a) / dx))
        if not 1 <= f <= faces.size - 2:
            raise ValueError(f"atom at {atom.x} snaps outside the interior faces")
        idx.append(f)
        offsets.append(float(faces[f] - atom.x))
    if len(set(idx)) != len(idx):
        raise ValueError("two atoms snap to the same face; refine the grid")
    for x, off in zip((at.x for at in u0.atoms), offsets):
        if abs(off) > 1e-9 * dx:
            log.warning("atom at %.6g moved by %.3g to the nearest face", x, off)
    return idx, offsets


def _trajectories(res: MarchResult, u0: RadonMeasure1D, xs: Sequence[float], T: float
                  ) -> List[AtomTrajectory]:
    out = []
    for j, atom in enumerate(u0.atoms):
        C = res.atom_mass[:, j]
        traj = AtomTrajectory(xs[j], atom.mass, res.t_steps, C, T)
        out.append(AtomTrajectory(xs[j], atom.mass, res.t_steps, C, T, waiting_time(traj)))
    return out


def _traces(res: MarchResult, xs: Sequence[float], T: float) -> List[TraceSeries]:
    out = []
    t_left = res.t_steps[:-1]
    for j, x in enumerate(xs):
        end = res.extinct_at[j]
        n = t_left.size if end is None else int(np.searchsorted(t_left, end, side="left"))
        t_end = T if end is None else end
        out.append(TraceSeries(x, 1, t_left[:n], res.atom_fplus[:n, j], 0.0, kind="step", t_end=t_end))
        out.append(TraceSeries(x, -1, t_left[:n], res.atom_fminus[:n, j], 0.0, kind="step", t_end=t_end))
    return out


# ---------------------------------------------------------------------------
# Cauchy problem with atoms
# ---------------------------------------------------------------------------

def solve_measure_cauchy(
    h: HamiltonianSpec,
    u0: RadonMeasure1D,
    T: float,
    refine: Optional[RefinementSchedule] = None,
    snapshot_times: Optional[Sequence[float]] = None,
    t0: float = 0.0,
    cells: Optional[np.ndarray] = None,
    strict: bool = True,
) -> MeasureSolution:
    """Entropy solution of the Cauchy problem with atomic data on u0's window.

    The window edges are transmissive; the caller sizes the window so that
    no signal reaches them before ``T``. Each surrogate ``k_n`` is a full run;
    the last run is returned once the waiting-time brackets move by less than
    ``bracket_tol`` (relative) and the interior field by less than ``tol_conv``
    (relative L1) between the last two surrogates.

    Parameters
    ----------
    cells : array, optional
        Cell averages overriding those of ``u0.density`` (used for restarts).
    strict : bool
        Raise :class:`NotConverged` when the acceptance test fails; otherwise
        only record the residuals.

    Raises
    ------
    NotConverged, NegativeMassOvershoot
    """
    sched = refine or RefinementSchedule()
    if T <= t0:
        raise ValueError("T must exceed t0")
    a, b = u0.window
    N = sched.n_cells
    faces = np.linspace(a, b, N + 1)
    dx = float(faces[1] - faces[0])
    u_init = u0.cell_averages(faces) if cells is None else np.asarray(cells, dtype=float)
    if u_init.shape != (N,):
        raise ValueError("cells must have n_cells entries")
    atom_faces, _ = _snap_atoms(u0, faces)
    xs = [float(faces[f]) for f in atom_faces]
    scale = max(1.0, float(np.max(np.abs(u_init))) if u_init.size else 1.0)
    ks = [f * scale for f in sched.surrogate_factors]
    eps = _eps_for(h, dx, sched)
    K = 1.02 * ks[-1] + scale + 1.0
    big = FluxTable(h, K, sched.table_delta)
    lip = max(h.lip_norm, big.lip)
    snaps = snapshot_times
    if snaps is None:
        snaps = np.linspace(t0, T, sched.n_snapshots)

    runs, results = [], []
    for k in ks:
        table = big if k == ks[-1] else FluxTable(h, 1.02 * k + scale + 1.0, sched.table_delta)
        split = [SplitFace(f, at.mass, math.copysign(k, at.mass)) for f, at in zip(atom_faces, u0.atoms)]
        res = march(
            table, faces, u_init, eps, T,
            Boundary("transmissive"), Boundary("transmissive"),
            split=split, lip=lip, t0=t0, snapshot_times=snaps,
            max_steps=sched.max_steps,
        )
        trajs = _trajectories(res, u0, xs, T)
        runs.append({
            "k": k,
            "brackets": [tr.bracket.as_dict() for tr in trajs],
            "steps": int(res.t_steps.size - 1),
        })
        results.append((res, trajs))
        log.debug("surrogate %.4g: brackets %s", k, [tr.bracket.label for tr in trajs])

    res, trajs = results[-1]
    for tr in trajs:
        tol = LANDING_TOL * abs(tr.c)
        if np.any(np.sign(tr.c) * tr.C < -tol):
            raise NegativeMassOvershoot(f"atom at {tr.x} crossed zero by more than {tol:g}")

    residuals: Dict[str, object] = {"bracket_moves": [], "interior_l1": None, "accepted": None}
    extrap: List[Optional[float]] = []
    if len(results) >= 2:
        prev_res, prev_trajs = results[-2]
        moves = []
        for cur, old in zip(trajs, prev_trajs):
            bc, bo = cur.bracket, old.bracket
            if bc.extinguished and bo.extinguished:
                moves.append(abs(bc.midpoint - bo.midpoint) / max(bc.midpoint, 1e-300))
            elif bc.extinguished != bo.extinguished:
                moves.append(math.inf)
            else:
                moves.append(0.0)
        mask = _interior_mask(N, atom_faces, sched.interior_fraction)
        l1 = _field_l1_gap(res.u_snap, prev_res.u_snap, mask, dx) if np.any(mask) else 0.0
        ok = all(m < sched.bracket_tol for m in moves) and l1 < sched.tol_conv
        residuals.update(bracket_moves=moves, interior_l1=l1, accepted=ok)
        k_ratio = ks[-1] / ks[-2]
        for cur, old in zip(trajs, prev_trajs):
            if cur.bracket.extinguished and old.bracket.extinguished:
                # first-order Richardson in 1/k
                w = k_ratio / (k_ratio - 1.0)
                extrap.append(w * cur.bracket.t_hi - (w - 1.0) * old.bracket.t_hi)
            else:
                extrap.append(None)
    else:
        extrap = [None] * len(trajs)

    sol = MeasureSolution(
        flux_name=h.name,
        u0=u0,
        faces=faces,
        t=res.t_snap,
        u=res.u_snap,
        G=res.G_snap,
        face_int=res.face_int_snap,
        fplus_int=res.atom_fplus_int_snap,
        fminus_int=res.atom_fminus_int_snap,
        atom_faces=tuple(atom_faces),
        atoms=trajs,
        traces=_traces(res, xs, T),
        edge_flux_int=np.stack([res.face_int_snap[:, 0], res.face_int_snap[:, -1]], axis=1),
        eps=eps,
        dt=res.dt,
        surrogate=ks[-1],
        schedule=sched,
        runs=runs,
        residuals=residuals,
        extrapolated_waiting=extrap,
        bv=dict(res.bv),
        max_abs_face_flux=res.max_abs_face_flux,
        max_jump=res.max_jump,
        t0=t0,
    )
    if strict and residuals["accepted"] is False:
        raise NotConverged(
            f"surrogate sequence not converged: bracket moves {residuals['bracket_moves']}, "
            f"interior L1 {residuals['interior_l1']:.3g}",
            residuals=residuals,
            partial=sol,
        )
    return sol


def restart(h: HamiltonianSpec, sol: MeasureSolution, i: int, T: float,
            refine: Optional[RefinementSchedule] = None,
            snapshot_times: Optional[Sequence[float]] = None) -> MeasureSolution:
    """Continue ``sol`` from snapshot ``i`` to ``T`` with its surviving atoms."""
    cells, atoms = sol.state_at(i)
    u0 = RadonMeasure1D(sol.u0.grid, sol.u0.density, tuple(atoms), sol.u0.domain)
    return solve_measure_cauchy(
        h, u0, T, refine or sol.schedule, snapshot_times=snapshot_times,
        t0=float(sol.t[i]), cells=cells,
    )


# ---------------------------------------------------------------------------
# single interval with singular boundary data
# ---------------------------------------------------------------------------

def _bc_boundary(bc: SingularBC, n: int) -> Boundary:
    if bc.value is None:
        return Boundary("transmissive")
    return Boundary("singular", bc.realized_sequence[n])


def solve_singular_dirichlet(
    h: HamiltonianSpec,
    u0_piece: Union[RadonMeasure1D, Piece],
    bc_left: SingularBC,
    bc_right: SingularBC,
    T: float,
    refine: Optional[RefinementSchedule] = None,
    strict: bool = True,
) -> Tuple[GridField, Tuple[TraceSeries, TraceSeries]]:
    """Entropy solution on a bounded interval with +-infinity boundary values.

    Runs the surrogate sequences of both boundaries in lockstep (they must
    have equal length when both are singular). Returns the field of the last
    run and the left/right boundary traces, Richardson-extrapolated in
    ``1/k`` over the last two surrogates with the difference as error.

    Raises
    ------
    NotConverged
        If the interior fields of the last two runs differ by ``tol_conv`` or more.
    """
    sched = refine or RefinementSchedule()
    if isinstance(u0_piece, Piece):
        grid = np.linspace(u0_piece.left, u0_piece.right, max(u0_piece.grid.size, 2))
        dens = np.interp(grid, u0_piece.grid, u0_piece.derivative())
        u0_piece = RadonMeasure1D(grid, dens, (), (u0_piece.left, u0_piece.right))
    if u0_piece.atoms:
        raise ValueError("u0_piece must not carry atoms")
    lens = {len(bc.realized_sequence) for bc in (bc_left, bc_right) if bc.value is not None}
    if len(lens) > 1:
        raise ValueError("surrogate sequences must have equal length")
    n_runs = lens.pop() if lens else 1
    a, b = u0_piece.window
    N = sched.n_cells
    faces = np.linspace(a, b, N + 1)
    dx = float(faces[1] - faces[0])
    u_init = u0_piece.cell_averages(faces)
    eps = _eps_for(h, dx, sched)
    all_k = [abs(v) for bc in (bc_left, bc_right) for v in bc.realized_sequence]
    scale = max(1.0, float(np.max(np.abs(u_init))))
    big = FluxTable(h, 1.02 * max(all_k + [scale]) + scale + 1.0, sched.table_delta)
    lip = max(h.lip_norm, big.lip)

    results = []
    for n in range(n_runs):
        res = march(
            big, faces, u_init, eps, T, _bc_boundary(bc_left, n), _bc_boundary(bc_right, n),
            lip=lip, n_snapshots=sched.n_snapshots, max_steps=sched.max_steps,
        )
        results.append(res)
    res = results[-1]
    x = 0.5 * (faces[1:] + faces[:-1])
    t_left = res.t_steps[:-1]

    def trace(side_vals: List[np.ndarray], loc: float, side: int, bc: SingularBC) -> TraceSeries:
        cur = side_vals[-1]
        if len(side_vals) >= 2 and bc.value is not None:
            prev = np.interp(t_left, results[-2].t_steps[:-1], side_vals[-2])
            r = abs(bc.realized_sequence[-1] / bc.realized_sequence[-2])
            w = r / (r - 1.0)
            return TraceSeries(loc, side, t_left, w * cur - (w - 1.0) * prev, 0.0,
                               error=np.abs(cur - prev), kind="step", t_end=T)
        return TraceSeries(loc, side, t_left, cur, 0.0, kind="step", t_end=T)

    left_tr = trace([r.left_flux for r in results], a, 1, bc_left)
    right_tr = trace([r.right_flux for r in results], b, -1, bc_right)

    residuals: Dict[str, object] = {"interior_l1": None, "accepted": None}
    if n_runs >= 2:
        mask = _interior_mask(N, [], sched.interior_fraction,
                              (bc_left.value is not None, bc_right.value is not None))
        l1 = _field_l1_gap(res.u_snap, results[-2].u_snap, mask, dx)
        residuals.update(interior_l1=l1, accepted=l1 < sched.tol_conv)
    meta = {
        "flux": h.name, "eps": eps, "dx": dx, "dt": res.dt, "N": N, "T": T,
        "m1": bc_left.value, "m2": bc_right.value,
        "surrogates": [list(bc_left.realized_sequence), list(bc_right.realized_sequence)],
        "scheme_id": "singular-dirichlet", "residuals": residuals,
    }
    fld = GridField(x, res.t_snap, res.u_snap, meta, {"march": res})
    if strict and residuals["accepted"] is False:
        raise NotConverged(f"interior L1 gap {residuals['interior_l1']:.3g} >= {sched.tol_conv}",
                           residuals=residuals, partial=(fld, (left_tr, right_tr)))
    return fld, (left_tr, right_tr)


# ---------------------------------------------------------------------------
# traces from fields
# ---------------------------------------------------------------------------

def _strip(field_: GridField, location: float, side: int, n: int) -> np.ndarray:
    x = field_.x_grid
    if side > 0:
        idx = np.nonzero(x > location)[0][:n]
    else:
        idx = np.nonzero(x < location)[0][-n:] if n > 0 else np.array([], dtype=int)
    if idx.size < n:
        raise WindowTooNarrow(f"only {idx.size} cells available on side {side:+d}")
    return idx


def extract_trace(
    field_: GridField,
    h: HamiltonianSpec,
    location: float,
    side: int,
    windows: Sequence[float],
) -> TraceSeries:
    """Average H(u) over strips of each width next to ``location``; extrapolate to zero width.

    With the two narrowest widths ``w1 < w2`` the extrapolated trace is
    ``A(w1) + (A(w1) - A(w2)) w1 / (w2 - w1)`` (``2A(w) - A(2w)`` for
    doubling widths); the error estimate is the size of that correction.

    Raises
    ------
    WindowTooNarrow
        If the narrowest strip holds fewer than four cells.
    """
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    ws = sorted(float(w) for w in windows)
    if not ws or ws[0] <= 0:
        raise ValueError("windows must be positive")
    dx = field_.dx
    counts = [int(round(w / dx)) for w in ws]
    if counts[0] < 4:
        raise WindowTooNarrow(f"narrowest window holds {counts[0]} cells (< 4)")
    Hu = h.eval(field_.values)
    avgs = [Hu[:, _strip(field_, location, side, n)].mean(axis=1) for n in counts]
    if len(avgs) == 1:
        return TraceSeries(location, side, field_.t_grid, avgs[0], ws[0],
                           np.zeros_like(avgs[0]), kind="nodal")
    w1, w2 = counts[0] * dx, counts[1] * dx
    corr = (avgs[0] - avgs[1]) * w1 / (w2 - w1)
    return TraceSeries(location, side, field_.t_grid, avgs[0] + corr, ws[0], np.abs(corr), kind="nodal")


def trace_envelope_violation(tr: TraceSeries, h: HamiltonianSpec, atom_sign: int,
                             surrogate: Optional[float] = None) -> float:
    """Largest excursion of a trace outside its admissible envelope.

    Every trace lies in ``[inf H, sup H]``. Next to a positive atom the right
    trace is at least ``limsup_{+inf} H`` and the left trace at most
    ``liminf_{+inf} H``; next to a negative atom the right trace is at most
    ``liminf_{-inf} H`` and the left trace at least ``limsup_{-inf} H``.
    With a finite surrogate ``k`` the asymptotic value is only realized up to
    its distance from the extremum of H over ``[k/2, k]`` (signed), which is
    allowed as slack.
    """
    v = np.asarray(tr.values, dtype=float)
    worst = max(0.0, float(np.max(v - h.sup_value, initial=0.0)),
                float(np.max(h.inf_value - v, initial=0.0)))
    asy = h.asymptotics
    if atom_sign > 0:
        lower = tr.side > 0
        target = asy.hstar_plus if lower else asy.hlow_plus
    else:
        lower = tr.side < 0
        target = asy.hstar_minus if lower else asy.hlow_minus
    slack = 0.0
    if surrogate:
        seg = math.copysign(1.0, atom_sign) * np.linspace(0.5, 1.0, 4001) * abs(surrogate)
        hs = h.eval(seg)
        slack = max(0.0, target - float(np.max(hs))) if lower else max(0.0, float(np.min(hs)) - target)
    if lower:
        worst = max(worst, float(np.max(target - slack - v, initial=0.0)))
    else:
        worst = max(worst, float(np.max(v - target - slack, initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# compatibility and entropy diagnostics
# ---------------------------------------------------------------------------

def _bump_battery(t_end: float, t_start: float = 0.0) -> List[np.ndarray]:
    """(centre, radius) pairs of time bumps supported inside (t_start, t_end)."""
    out = []
    span = t_end - t_start
    for level in (1, 2, 4, 8):
        r = 0.5 * span / level
        for m in range(2 * level - 1):
            out.append((t_start + r * (1 + m * 1.0), r))
    return out


@dataclass(frozen=True)
class CompatibilityReport:
    """Worst wrong-sign value of the compatibility integrals at one atom.

    ``extraction_error`` is the largest time-bump average of
    ``|H(u) - f|`` over the strip, with ``f`` the one-sided flux trace; it is
    zero when no traces are supplied. ``excess`` is the largest amount by
    which a violation exceeds the extraction error of its own bump.
    """

    max_violation: float
    right_violation: float
    left_violation: float
    worst_k: Optional[float]
    n_tests: int
    extraction_error: float = 0.0
    excess: float = 0.0

    @property
    def passed(self) -> bool:
        return self.excess <= 1e-9

    def as_dict(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "right_violation": self.right_violation,
            "left_violation": self.left_violation,
            "worst_k": self.worst_k,
            "n_tests": self.n_tests,
            "extraction_error": self.extraction_error,
            "excess": self.excess,
            "passed": self.passed,
        }


def _trace_at(tr: Optional[TraceSeries], t: np.ndarray) -> Optional[np.ndarray]:
    """Step trace sampled at ``t`` (the step starting at or before each time)."""
    if tr is None or tr.t_grid.size == 0:
        return None
    i = np.clip(np.searchsorted(tr.t_grid, t + 1e-12 * max(1.0, float(t[-1])), side="right") - 1,
                0, tr.t_grid.size - 1)
    return np.asarray(tr.values, dtype=float)[i]


def compatibility_diagnostic(
    field_: GridField,
    h: HamiltonianSpec,
    location: float,
    sign: int,
    k_grid: Sequence[float],
    window: float,
    t_end: Optional[float] = None,
    traces: Optional[Tuple[Optional[TraceSeries], Optional[TraceSeries]]] = None,
) -> CompatibilityReport:
    """Worst sign violation of the one-sided compatibility integrals at an atom.

    For each ``k`` and time bump ``beta`` the strip average (width
    ``window``) of ``sgn_s(u - k) [H(u) - H(k)]`` is integrated against
    ``beta`` and normalized by ``int beta``, where ``s = -`` for a positive
    atom and ``s = +`` for a negative one. The right-hand integral must be
    ``<= 0`` and the left-hand one ``>= 0``; the report holds the largest
    positive part of the wrong sign.

    Strip states differ from the inviscid trace inside the boundary layer.
    When ``traces = (right, left)`` flux traces are given, the same bump
    average of ``|H(u) - f|`` measures that extraction error; for a one-cell
    strip next to a Godunov ghost face it bounds the violation exactly.
    """
    t = field_.t_grid
    t_end = float(t[-1]) if t_end is None else float(t_end)
    n = max(1, int(round(window / field_.dx)))
    u_r = field_.values[:, _strip(field_, location, 1, n)]
    u_l = field_.values[:, _strip(field_, location, -1, n)]
    H_r, H_l = h.eval(u_r), h.eval(u_l)
    bumps = [bump((t - c) / r) for c, r in _bump_battery(t_end, float(t[0]))]
    norms = [np.trapezoid(b, t) for b in bumps]
    tr_r, tr_l = traces if traces is not None else (None, None)
    f_r, f_l = _trace_at(tr_r, t), _trace_at(tr_l, t)
    e_r = np.zeros(t.size) if f_r is None else np.abs(H_r - f_r[:, None]).mean(axis=1)
    e_l = np.zeros(t.size) if f_l is None else np.abs(H_l - f_l[:, None]).mean(axis=1)
    eb_r = [float(np.trapezoid(e_r * b, t) / nb) if nb > 0 else 0.0 for b, nb in zip(bumps, norms)]
    eb_l = [float(np.trapezoid(e_l * b, t) / nb) if nb > 0 else 0.0 for b, nb in zip(bumps, norms)]
    worst_r = worst_l = excess = 0.0
    worst_k = None
    count = 0
    for k in k_grid:
        Hk = float(h.eval(np.array([k]))[0])
        if sign > 0:
            sr = np.where(u_r < k, -1.0, 0.0)
            sl = np.where(u_l < k, -1.0, 0.0)
        else:
            sr = np.where(u_r > k, 1.0, 0.0)
            sl = np.where(u_l > k, 1.0, 0.0)
        gr = (sr * (H_r - Hk)).mean(axis=1)
        gl = (sl * (H_l - Hk)).mean(axis=1)
        for b, nb, er, el in zip(bumps, norms, eb_r, eb_l):
            if nb <= 0:
                continue
            count += 1
            vr = float(np.trapezoid(gr * b, t) / nb)
            vl = float(np.trapezoid(gl * b, t) / nb)
            excess = max(excess, vr - er, -vl - el)
            if vr > worst_r:
                worst_r = vr
                worst_k = float(k) if vr >= worst_l else worst_k
            if -vl > worst_l:
                worst_l = -vl
                worst_k = float(k) if worst_l >= worst_r else worst_k
    extraction = max(eb_r + eb_l + [0.0])
    return CompatibilityReport(max(worst_r, worst_l), worst_r, worst_l, worst_k, count,
                               extraction, max(excess, 0.0))


@dataclass(frozen=True)
class EntropyReport:
    max_violation: float
    tol: float
    worst: Optional[Tuple[float, float, float]]  # (x centre, t centre, k)
    n_tests: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def as_dict(self) -> dict:
        return {"max_violation": self.max_violation, "tol": self.tol,
                "worst": None if self.worst is None else list(self.worst),
                "n_tests": self.n_tests, "passed": self.passed}


def _dbump(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi ** 2)) * (-2.0 * xi / (1.0 - xi ** 2) ** 2)
    return out


def _d2bump(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    q = 1.0 - xi ** 2
    g = -2.0 * xi / q ** 2
    dg = -2.0 / q ** 2 - 8.0 * xi ** 2 / q ** 3
    out[inside] = np.exp(-1.0 / q) * (g * g + dg)
    return out


def entropy_residual(
    field_: GridField,
    h: HamiltonianSpec,
    k_grid: Sequence[float],
    x_range: Optional[Tuple[float, float]] = None,
    exclude: Sequence[float] = (),
    radii: Sequence[float] = (0.2, 0.4),
    tol: float = 5e-2,
    eps: float = 0.0,
) -> EntropyReport:
    """Kruzkov inequality tested against tensor bumps phi(x) psi(t).

    For each test function and ``k`` the quantity
    ``E = iint |u-k| phi psi' + sgn(u-k)[H(u)-H(k)] phi' psi + eps |u-k| phi'' psi``
    must be nonnegative; the last term is the viscous part and vanishes for
    ``eps = 0``. The report holds the largest ``-E / iint phi psi``.
    Bumps whose support touches a point of ``exclude`` (atoms) are skipped.
    The remaining numerical-viscosity defect is first order in ``dx``.
    """
    x, t, u = field_.x_grid, field_.t_grid, field_.values
    dx = field_.dx
    lo, hi = (float(x[0]), float(x[-1])) if x_range is None else x_range
    t0, t1 = float(t[0]), float(t[-1])
    rt = 0.25 * (t1 - t0)
    t_centres = [t0 + rt * (1 + m) for m in range(3)]
    Hu = h.eval(u)
    worst, worst_at, count = 0.0, None, 0
    for rx in radii:
        centres = np.arange(lo + rx, hi - rx + 1e-12, rx / 2.0)
        for xc in centres:
            if any(abs(xc - e) < rx + dx for e in exclude):
                continue
            phi = bump((x - xc) / rx)
            dphi = _dbump((x - xc) / rx) / rx
            d2phi = _d2bump((x - xc) / rx) / rx ** 2
            sel = phi > 0
            if not np.any(sel):
                continue
            for tc in t_centres:
                psi = bump((t - tc) / rt)
                dpsi = _dbump((t - tc) / rt) / rt
                mass = float(np.trapezoid(psi, t) * phi.sum() * dx)
                if mass <= 0:
                    continue
                for k in k_grid:
                    Hk = float(h.eval(np.array([k]))[0])
                    us, Hs = u[:, sel], Hu[:, sel]
                    absu = np.abs(us - k)
                    a = absu @ phi[sel] * dx
                    q = (np.sign(us - k) * (Hs - Hk)) @ dphi[sel] * dx
                    v = absu @ d2phi[sel] * dx if eps else 0.0
                    E = float(np.trapezoid(a * dpsi + (q + eps * v) * psi, t))
                    count += 1
                    v = -E / mass
                    if v > worst:
                        worst, worst_at = v, (float(xc), float(tc), float(k))
    return EntropyReport(worst, tol, worst_at, count)


def adversarial_field(
    n_cells: int = 600,
    window: Tuple[float, float] = (-1.0, 2.0),
    T: float = 1.0,
    n_times: int = 101,
) -> Tuple[GridField, HamiltonianSpec, float]:
    """A non-entropy field next to a positive atom at 0 for ``clipped_quadratic(-2,2)``.

    Right of the atom the field is 0 up to a reversed shock at ``0.5 + t/2``
    and 1 beyond; left of it the field is 0. Both the compatibility
    condition (the state next to a positive atom must carry the reservoir
    flux) and the Kruzkov inequality (the upward jump is an expansion shock)
    are violated. Returns ``(field, flux, atom location)``.
    """
    from .hamiltonian import make_hamiltonian

    h = make_hamiltonian("clipped_quadratic(-2,2)", probe_range=1e3)
    faces = np.linspace(window[0], window[1], n_cells + 1)
    x = 0.5 * (faces[1:] + faces[:-1])
    t = np.linspace(0.0, T, n_times)
    vals = np.where((x[None, :] > 0.5 + 0.5 * t[:, None]), 1.0, 0.0)
    meta = {"flux": h.name, "adversarial": True}
    return GridField(x, t, vals, meta), h, 0.0
