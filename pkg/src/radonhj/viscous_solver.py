"""Explicit conservative finite-volume solver for u_t + H(u)_x = eps u_xx.

Interior faces use the Engquist-Osher flux plus a centred viscous flux.
Boundaries are described by :class:`Boundary`:

``dirichlet``
    ghost cell pinned to a finite value (convective and viscous flux).
``singular``
    ghost value standing in for +-infinity; the face carries the Godunov
    flux against the ghost and no viscous flux, i.e. the zero-viscosity
    boundary condition a monotone scheme converges to.
``transmissive``
    zero-gradient ghost; the face flux is H of the edge cell.

The same engine also handles *split faces* inside the grid: faces carrying
an atom, where the left and right neighbours see two singular boundaries
and the atom mass is advanced with the difference of the two face fluxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BlowUp, CFLViolation
from .hamiltonian import HamiltonianSpec
from .measure_data import SmoothedData

CFL_SAFETY = 0.4
DEFAULT_MAX_STEPS = 5_000_000
SCHEME_ID = "engquist-osher+central-diffusion"


class FluxTable:
    """H tabulated on a uniform grid over [-K, K] with Engquist-Osher splittings.

    Between nodes H is replaced by its piecewise-linear interpolant, for
    which the splitting and the Godunov extrema are exact.
    """

    def __init__(self, h: HamiltonianSpec, K: float, delta: float = 1e-3):
        n = int(math.ceil(K / delta))
        self.delta = delta
        self.n = n
        self.K = n * delta
        self.u = delta * np.arange(-n, n + 1, dtype=float)
        self.H = h.eval(self.u)
        dH = np.diff(self.H)
        plus = np.concatenate([[0.0], np.cumsum(np.maximum(dH, 0.0))])
        minus = np.concatenate([[0.0], np.cumsum(np.minimum(dH, 0.0))])
        self.h_plus = self.H[n] + plus - plus[n]
        self.h_minus = minus - minus[n]
        self.lip = float(np.max(np.abs(dH)) / delta) if dH.size else 0.0

    def _locate(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = (np.asarray(u, dtype=float) + self.K) / self.delta
        i = np.clip(np.floor(s).astype(np.int64), 0, 2 * self.n - 1)
        return i, s - i

    def _interp(self, arr: np.ndarray, u) -> np.ndarray:
        i, w = self._locate(u)
        return arr[i] + w * (arr[i + 1] - arr[i])

    def flux(self, u) -> np.ndarray:
        return self._interp(self.H, u)

    def eo(self, a, b) -> np.ndarray:
        return self._interp(self.h_plus, a) + self._interp(self.h_minus, b)

    def all_at(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(H, H_plus, H_minus) at u with a single table lookup."""
        i, w = self._locate(u)
        out = []
        for arr in (self.H, self.h_plus, self.h_minus):
            a0 = arr[i]
            out.append(a0 + w * (arr[i + 1] - a0))
        return out[0], out[1], out[2]

    def covers(self, u: np.ndarray) -> bool:
        return bool(np.max(np.abs(u)) <= self.K)


class GhostFlux:
    """Godunov flux against a fixed ghost state g (a node of the table)."""

    def __init__(self, table: FluxTable, g: float):
        self.table = table
        ig = int(round((g + table.K) / table.delta))
        if not 0 <= ig <= 2 * table.n:
            raise ValueError("ghost state outside the flux table")
        self.ig = ig
        self.g = float(table.u[ig])
        H = table.H
        self.rmax = np.empty_like(H)
        self.rmin = np.empty_like(H)
        self.rmax[ig:] = np.maximum.accumulate(H[ig:])
        self.rmin[ig:] = np.minimum.accumulate(H[ig:])
        self.rmax[: ig + 1] = np.maximum.accumulate(H[: ig + 1][::-1])[::-1]
        self.rmin[: ig + 1] = np.minimum.accumulate(H[: ig + 1][::-1])[::-1]

    def _extremes(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        t = self.table
        s = (np.asarray(u, dtype=float) + t.K) / t.delta
        below = s <= self.ig
        j = np.where(below, np.ceil(s), np.floor(s)).astype(np.int64)
        j = np.clip(j, 0, 2 * t.n)
        hu = t.flux(u)
        return np.maximum(hu, self.rmax[j]), np.minimum(hu, self.rmin[j])

    def ghost_left(self, u) -> np.ndarray:
        """Flux at a face with the ghost on the left and state u on the right."""
        mx, mn = self._extremes(u)
        return np.where(self.g <= np.asarray(u), mn, mx)

    def ghost_right(self, u) -> np.ndarray:
        """Flux at a face with state u on the left and the ghost on the right."""
        mx, mn = self._extremes(u)
        return np.where(np.asarray(u) <= self.g, mn, mx)


@dataclass(frozen=True)
class Boundary:
    kind: str  # "dirichlet" | "singular" | "transmissive"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "singular", "transmissive"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass
class SplitFace:
    """An atom sitting on face ``face`` (between cells face-1 and face)."""

    face: int
    mass: float
    ghost: float
    alive: bool = True
    extinct_at: Optional[float] = None


@dataclass
class MarchResult:
    faces: np.ndarray
    t_snap: np.ndarray
    u_snap: np.ndarray
    G_snap: np.ndarray  # time integral of H(u) per cell
    face_int_snap: np.ndarray  # time integral of the numerical flux per face
    t_steps: np.ndarray
    left_flux: np.ndarray
    right_flux: np.ndarray
    atom_mass: np.ndarray  # (n_steps+1, n_atoms)
    atom_fplus: np.ndarray  # flux entering the right neighbour, per step
    atom_fminus: np.ndarray  # flux leaving the left neighbour, per step
    atom_fplus_int_snap: np.ndarray
    atom_fminus_int_snap: np.ndarray
    extinct_at: List[Optional[float]]
    dt: float
    eps: float
    bv: Dict[str, float]
    max_abs_face_flux: float
    max_jump: float


def stable_dt(dx: float, lip: float, eps: float) -> float:
    caps = []
    if lip > 0:
        caps.append(dx / lip)
    if eps > 0:
        caps.append(dx * dx / (2.0 * eps))
    return CFL_SAFETY * (min(caps) if caps else dx)


def march(
    table: FluxTable,
    faces: np.ndarray,
    u0: np.ndarray,
    eps: float,
    T: float,
    left: Boundary,
    right: Boundary,
    split: Sequence[SplitFace] = (),
    n_snapshots: int = 101,
    t0: float = 0.0,
    lip: Optional[float] = None,
    max_steps: int = DEFAULT_MAX_STEPS,
    snapshot_times: Optional[Sequence[float]] = None,
) -> MarchResult:
    """Advance cell averages ``u0`` on ``faces`` from t0 to T.

    Atoms on split faces are landed exactly at zero mass: when a step would
    carry an atom across zero the step is shortened to the landing time.
    """
    u = np.array(u0, dtype=float)
    N = u.size
    dx = float(faces[1] - faces[0])
    lip = table.lip if lip is None else lip
    dt_cfl = stable_dt(dx, lip, eps)
    if (T - t0) / dt_cfl > max_steps:
        raise CFLViolation(
            f"{(T - t0) / dt_cfl:.3g} steps needed, cap is {max_steps}"
        )
    if not table.covers(u):
        raise ValueError("initial data exceeds the flux table range")

    atoms = [SplitFace(s.face, s.mass, s.ghost, s.alive, s.extinct_at) for s in split]
    ghosts = [GhostFlux(table, a.ghost) for a in atoms]
    bghost = {
        side: GhostFlux(table, b.value)
        for side, b in (("l", left), ("r", right))
        if b.kind == "singular"
    }

    if snapshot_times is None:
        snaps = np.linspace(t0, T, n_snapshots)
    else:
        snaps = np.unique(np.clip(np.asarray(snapshot_times, float), t0, T))
        if snaps[0] > t0:
            snaps = np.concatenate([[t0], snaps])
    n_snap = snaps.size
    u_snap = np.empty((n_snap, N))
    G_snap = np.empty((n_snap, N))
    F_snap = np.empty((n_snap, N + 1))
    fp_snap = np.empty((n_snap, len(atoms)))
    fm_snap = np.empty((n_snap, len(atoms)))

    G = np.zeros(N)
    Fint = np.zeros(N + 1)
    fp_int = np.zeros(len(atoms))
    fm_int = np.zeros(len(atoms))

    t_list = [t0]
    lf_list: List[float] = []
    rf_list: List[float] = []
    mass_list = [[a.mass if a.alive else 0.0 for a in atoms]]
    fp_list: List[List[float]] = []
    fm_list: List[List[float]] = []

    bv = {"tv_max": 0.0, "ut_l1_max": 0.0, "eps_ux_max": 0.0}
    max_abs_flux = 0.0
    max_jump = 0.0

    def fluxes(u: np.ndarray):
        Hu, hp, hm = table.all_at(u)
        F = np.empty(N + 1)
        F[1:-1] = hp[:-1] + hm[1:]
        if eps > 0:
            F[1:-1] -= eps * np.diff(u) / dx
        if left.kind == "dirichlet":
            F[0] = table.eo(left.value, u[0]) - eps * (u[0] - left.value) / dx
        elif left.kind == "singular":
            F[0] = bghost["l"].ghost_left(u[0])
        else:
            F[0] = Hu[0]
        if right.kind == "dirichlet":
            F[-1] = table.eo(u[-1], right.value) - eps * (right.value - u[-1]) / dx
        elif right.kind == "singular":
            F[-1] = bghost["r"].ghost_right(u[-1])
        else:
            F[-1] = Hu[-1]
        # split faces: left cell sees f_minus on its right, right cell sees f_plus
        Fl = F[1:].copy()  # flux on the right face of each cell
        Fr = F[:-1].copy()  # flux on the left face of each cell
        fplus = np.zeros(len(atoms))
        fminus = np.zeros(len(atoms))
        for k, (a, gh) in enumerate(zip(atoms, ghosts)):
            if not a.alive:
                continue
            fminus[k] = float(gh.ghost_right(u[a.face - 1]))
            fplus[k] = float(gh.ghost_left(u[a.face]))
            Fl[a.face - 1] = fminus[k]
            Fr[a.face] = fplus[k]
            F[a.face] = fplus[k]
        return F, Fl, Fr, fplus, fminus, Hu

    t = t0
    si = 0
    steps = 0
    while True:
        while si < n_snap and t >= snaps[si] - 1e-12 * max(1.0, abs(snaps[si])):
            u_snap[si] = u
            G_snap[si] = G
            F_snap[si] = Fint
            fp_snap[si] = fp_int
            fm_snap[si] = fm_int
            _, Fl_s, Fr_s, _, _, _ = fluxes(u)
            bv["tv_max"] = max(bv["tv_max"], float(np.sum(np.abs(np.diff(u)))))
            bv["ut_l1_max"] = max(bv["ut_l1_max"], float(np.sum(np.abs(Fl_s - Fr_s))))
            if eps > 0 and N > 1:
                bv["eps_ux_max"] = max(bv["eps_ux_max"], eps * float(np.max(np.abs(np.diff(u)))) / dx)
            si += 1
        if si >= n_snap:
            break
        dt = min(dt_cfl, snaps[si] - t)
        F, Fl, Fr, fplus, fminus, Hu = fluxes(u)
        rates = fminus - fplus
        for k, a in enumerate(atoms):
            if a.alive and rates[k] != 0.0:
                new = a.mass + dt * rates[k]
                if (a.mass > 0.0 and new <= 0.0) or (a.mass < 0.0 and new >= 0.0):
                    dt = min(dt, -a.mass / rates[k])
        G += dt * Hu
        Fint += dt * F
        fp_int += dt * fplus
        fm_int += dt * fminus
        u = u - (dt / dx) * (Fl - Fr)
        t += dt
        steps += 1
        for k, a in enumerate(atoms):
            if not a.alive:
                continue
            new = a.mass + dt * rates[k]
            if (a.mass > 0.0 and new <= 1e-14 * abs(a.mass)) or (a.mass < 0.0 and new >= -1e-14 * abs(a.mass)):
                a.mass = 0.0
                a.alive = False
                a.extinct_at = t
            else:
                a.mass = new
        t_list.append(t)
        lf_list.append(float(F[0]))
        rf_list.append(float(F[-1]))
        mass_list.append([a.mass for a in atoms])
        fp_list.append(fplus.tolist())
        fm_list.append(fminus.tolist())
        max_abs_flux = max(max_abs_flux, float(np.max(np.abs(F))))
        if N > 1:
            max_jump = max(max_jump, float(np.max(np.abs(np.diff(u)))))
        if steps % 256 == 0 or si == n_snap - 1:
            if not np.all(np.isfinite(u)):
                raise BlowUp(f"non-finite state at t={t:.6g}")
            if not table.covers(u):
                raise BlowUp(f"state left the flux table range at t={t:.6g}")
        if steps > max_steps:
            raise CFLViolation(f"step cap {max_steps} exceeded")

    if not np.all(np.isfinite(u)):
        raise BlowUp("non-finite state at the final time")
    na = len(atoms)
    return MarchResult(
        faces=np.asarray(faces, dtype=float),
        t_snap=snaps,
        u_snap=u_snap,
        G_snap=G_snap,
        face_int_snap=F_snap,
        t_steps=np.asarray(t_list),
        left_flux=np.asarray(lf_list),
        right_flux=np.asarray(rf_list),
        atom_mass=np.asarray(mass_list, dtype=float).reshape(len(mass_list), na),
        atom_fplus=np.asarray(fp_list, dtype=float).reshape(len(fp_list), na),
        atom_fminus=np.asarray(fm_list, dtype=float).reshape(len(fm_list), na),
        atom_fplus_int_snap=fp_snap,
        atom_fminus_int_snap=fm_snap,
        extinct_at=[a.extinct_at for a in atoms],
        dt=dt_cfl,
        eps=eps,
        bv=bv,
        max_abs_face_flux=max_abs_flux,
        max_jump=max_jump,
    )


@dataclass(frozen=True, eq=False)
class GridField:
    """Snapshots of a cell (or face) field with grid metadata."""

    x_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray
    metadata: Dict[str, object] = field(default_factory=dict)
    extras: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def dx(self) -> float:
        return float(self.x_grid[1] - self.x_grid[0])

    def max_principle_bounds(self) -> Tuple[float, float]:
        return float(np.min(self.values)), float(np.max(self.values))

    def mass(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.dx

    def to_csv(self, path, stride: int = 1) -> None:
        """Write (t, x, u) rows, keeping every ``stride``-th time level and cell."""
        with open(path, "w") as fh:
            fh.write("t,x,u\n")
            for ti in range(0, self.t_grid.size, stride):
                t = self.t_grid[ti]
                for xi in range(0, self.x_grid.size, stride):
                    fh.write(f"{t:.10g},{self.x_grid[xi]:.10g},{self.values[ti, xi]:.12g}\n")


def _table_for(h_eps: HamiltonianSpec, data: SmoothedData, delta: float = 1e-3) -> FluxTable:
    bound = max(abs(data.m1), abs(data.m2), float(np.max(np.abs(data.u0_eps))), 1.0)
    return FluxTable(h_eps, 1.05 * bound + 1.0, delta)


def solve_viscous_cl(
    h_eps: HamiltonianSpec,
    data: SmoothedData,
    eps: float,
    T: float,
    N: int,
    n_snapshots: int = 101,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> GridField:
    """Solve the Dirichlet problem with viscosity ``eps`` on ``data.interval``.

    The returned field holds cell averages at ``n_snapshots`` equally spaced
    times. ``extras`` carries the raw :class:`MarchResult`, the BV-type
    bounds and the cumulative boundary fluxes.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if T <= 0 or N < 2:
        raise ValueError("need T > 0 and N >= 2")
    faces, u0 = data.cell_averages(N)
    table = _table_for(h_eps, data)
    lip = max(h_eps.lip_norm, table.lip)
    res = march(
        table, faces, u0, eps, T,
        Boundary("dirichlet", data.m1), Boundary("dirichlet", data.m2),
        n_snapshots=n_snapshots, lip=lip, max_steps=max_steps,
    )
    dx = float(faces[1] - faces[0])
    centres = 0.5 * (faces[1:] + faces[:-1])
    meta = {
        "eps": eps, "m1": data.m1, "m2": data.m2, "scheme_id": SCHEME_ID,
        "dx": dx, "dt": res.dt, "N": N, "T": T, "lip": lip,
    }
    extras = {
        "march": res,
        "bv": dict(res.bv),
        "boundary_flux_in": res.face_int_snap[:, 0].copy(),
        "boundary_flux_out": res.face_int_snap[:, -1].copy(),
    }
    return GridField(centres, res.t_snap, res.u_snap, meta, extras)


def solve_viscous_hj(
    h_eps: HamiltonianSpec,
    data: SmoothedData,
    eps: float,
    T: float,
    N: int,
    cl: Optional[GridField] = None,
    n_snapshots: int = 101,
) -> GridField:
    """U_eps at cell faces: U0_eps minus the time integral of the face flux.

    The face flux is the scheme's numerical approximation of
    ``H_eps(u) - eps u_x``, so the discrete derivative of U_eps reproduces
    the cell averages of u_eps.
    """
    if cl is None:
        cl = solve_viscous_cl(h_eps, data, eps, T, N, n_snapshots)
    res: MarchResult = cl.extras["march"]  # type: ignore[assignment]
    faces = res.faces
    U = data.primitive_at(faces)[None, :] - res.face_int_snap
    meta = dict(cl.metadata)
    meta["field"] = "U_eps"
    extras = {
        "u": cl.values,
        "max_abs_face_flux": res.max_abs_face_flux,
        "max_jump": res.max_jump,
        "eps_ux_max": res.bv["eps_ux_max"],
    }
    return GridField(faces, res.t_snap, U, meta, extras)
