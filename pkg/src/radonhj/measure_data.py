"""Signed Radon measures with finitely many atoms, their primitives and
the smoothed boundary-compatible data used by the viscous solver."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AnchorOnAtom, DomainTooNarrow
from .hamiltonian import smooth_step

_LOC_TOL = 1e-12


@dataclass(frozen=True)
class Atom:
    x: float
    mass: float


def _cumulative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])


@dataclass(frozen=True, eq=False)
class RadonMeasure1D:
    """Density sampled on a uniform grid plus a finite list of signed atoms.

    ``domain`` may have infinite endpoints; ``grid`` then spans the finite
    computational window. Outside the grid the density is extended by its
    edge values.
    """

    grid: np.ndarray
    density: np.ndarray
    atoms: Tuple[Atom, ...] = ()
    domain: Tuple[float, float] = (-math.inf, math.inf)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", tuple(Atom(float(a.x), float(a.mass)) for a in self.atoms))
        if grid.ndim != 1 or grid.size < 2 or grid.shape != dens.shape:
            raise ValueError("grid and density must be 1-D arrays of equal length >= 2")
        steps = np.diff(grid)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-8, atol=0.0):
            raise ValueError("density grid must be uniform and increasing")
        if not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite")
        lo, hi = self.domain
        xs = [a.x for a in self.atoms]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("atom locations must be strictly increasing")
        for a in self.atoms:
            if a.mass == 0.0 or not math.isfinite(a.mass):
                raise ValueError("atom masses must be finite and nonzero")
            if not (lo < a.x < hi) or not (grid[0] < a.x < grid[-1]):
                raise ValueError(f"atom at {a.x} lies outside the open domain/window")

    # -- basic functionals -------------------------------------------------
    @property
    def window(self) -> Tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def density_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.density)

    def sup_density(self) -> float:
        return float(np.max(np.abs(self.density)))

    def primitive_density(self, x) -> np.ndarray:
        """Exact integral of the piecewise-linear density from the window start."""
        x = np.asarray(x, dtype=float)
        g, d = self.grid, self.density
        cum = _cumulative(g, d)
        h = g[1] - g[0]
        xc = np.clip(x, g[0], g[-1])
        i = np.clip(np.floor((xc - g[0]) / h).astype(int), 0, len(g) - 2)
        s = xc - g[i]
        inside = cum[i] + d[i] * s + 0.5 * (d[i + 1] - d[i]) * s * s / h
        # constant extension outside the grid
        return inside + (x - xc) * np.where(x < g[0], d[0], d[-1])

    def regular_mass(self, a: Optional[float] = None, b: Optional[float] = None) -> float:
        a = self.grid[0] if a is None else a
        b = self.grid[-1] if b is None else b
        return float(self.primitive_density(b) - self.primitive_density(a))

    def singular_mass(self) -> float:
        return float(sum(a.mass for a in self.atoms))

    def cell_averages(self, faces: np.ndarray) -> np.ndarray:
        prim = self.primitive_density(faces)
        return np.diff(prim) / np.diff(faces)

    # -- constructors / io -------------------------------------------------
    @classmethod
    def from_function(
        cls,
        fn: Optional[Callable[[np.ndarray], np.ndarray]],
        window: Tuple[float, float],
        n: int = 4001,
        atoms: Iterable[Tuple[float, float]] = (),
        domain: Tuple[float, float] = (-math.inf, math.inf),
    ) -> "RadonMeasure1D":
        grid = np.linspace(window[0], window[1], n)
        dens = np.zeros_like(grid) if fn is None else np.asarray(fn(grid), dtype=float) * np.ones_like(grid)
        return cls(grid, dens, tuple(Atom(x, c) for x, c in atoms), domain)

    def to_json(self) -> dict:
        return {
            "domain": [_enc(self.domain[0]), _enc(self.domain[1])],
            "grid": {"start": float(self.grid[0]), "stop": float(self.grid[-1]), "n": int(self.grid.size)},
            "density": self.density.tolist(),
            "atoms": [{"x": a.x, "mass": a.mass} for a in self.atoms],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RadonMeasure1D":
        g = obj["grid"]
        grid = np.linspace(g["start"], g["stop"], g["n"]) if isinstance(g, dict) else np.asarray(g, float)
        dom = tuple(_dec(v) for v in obj.get("domain", ["-inf", "inf"]))
        return cls(grid, np.asarray(obj["density"], float),
                   tuple(Atom(a["x"], a["mass"]) for a in obj.get("atoms", [])), dom)


def _enc(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _dec(v) -> float:
    return float(v)


@dataclass(frozen=True, eq=False)
class Piece:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        if g.ndim != 1 or g.size < 2 or g.shape != v.shape or np.any(np.diff(g) <= 0):
            raise ValueError("piece grid must be increasing with matching values")
        if not np.all(np.isfinite(v)):
            raise ValueError("piece values must be finite")

    @property
    def left(self) -> float:
        return float(self.grid[0])

    @property
    def right(self) -> float:
        return float(self.grid[-1])

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.values)

    def derivative(self) -> np.ndarray:
        order = 2 if self.grid.size > 2 else 1
        return np.gradient(self.values, self.grid, edge_order=order)


@dataclass(frozen=True, eq=False)
class PiecewiseFunction:
    """Function continuous on the closure of each piece, jumping at breakpoints."""

    breakpoints: Tuple[float, ...]
    pieces: Tuple[Piece, ...]

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if len(self.pieces) != len(bps) + 1:
            raise ValueError("need exactly one more piece than breakpoints")
        for j, b in enumerate(bps):
            left, right = self.pieces[j], self.pieces[j + 1]
            if abs(left.right - b) > _LOC_TOL * max(1.0, abs(b)) or abs(right.left - b) > _LOC_TOL * max(1.0, abs(b)):
                raise ValueError(f"pieces do not meet at breakpoint {b}")
            if left.values[-1] == right.values[0]:
                raise ValueError(f"zero jump at breakpoint {b}")

    @property
    def domain(self) -> Tuple[float, float]:
        return self.pieces[0].left, self.pieces[-1].right

    def left_value(self, j: int) -> float:
        return float(self.pieces[j].values[-1])

    def right_value(self, j: int) -> float:
        return float(self.pieces[j + 1].values[0])

    def jumps(self) -> List[float]:
        return [self.right_value(j) - self.left_value(j) for j in range(len(self.breakpoints))]

    def piece_index(self, x) -> np.ndarray:
        return np.searchsorted(np.asarray(self.breakpoints), x, side="right")

    def __call__(self, x) -> np.ndarray:
        """Evaluate, taking the right-hand value at breakpoints."""
        x = np.asarray(x, dtype=float)
        idx = self.piece_index(x)
        out = np.empty_like(x)
        for j, p in enumerate(self.pieces):
            mask = idx == j
            out[mask] = p(x[mask])
        return out

    def to_json(self) -> dict:
        return {
            "breakpoints": list(self.breakpoints),
            "pieces": [{"grid": p.grid.tolist(), "values": p.values.tolist()} for p in self.pieces],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PiecewiseFunction":
        return cls(tuple(obj["breakpoints"]), tuple(Piece(p["grid"], p["values"]) for p in obj["pieces"]))


def dumps(obj) -> str:
    return json.dumps(obj.to_json(), sort_keys=True)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def derivative_measure(U0: PiecewiseFunction, n: Optional[int] = None) -> RadonMeasure1D:
    """Atoms at the breakpoints carrying the jumps; density is the piecewise derivative."""
    a, b = U0.domain
    if n is None:
        h = min(float(np.min(np.diff(p.grid))) for p in U0.pieces)
        n = int(round((b - a) / h)) + 1
    grid = np.linspace(a, b, n)
    dens = np.empty_like(grid)
    idx = U0.piece_index(grid)
    bps = np.asarray(U0.breakpoints)
    derivs = [p.derivative() for p in U0.pieces]
    for j, p in enumerate(U0.pieces):
        mask = idx == j
        dens[mask] = np.interp(grid[mask], p.grid, derivs[j])
    for j, xb in enumerate(bps):
        on = np.abs(grid - xb) <= 1e-9 * (b - a)
        if np.any(on):
            dens[on] = 0.5 * (derivs[j][-1] + derivs[j + 1][0])
    atoms = tuple(Atom(x, c) for x, c in zip(U0.breakpoints, U0.jumps()))
    return RadonMeasure1D(grid, dens, atoms, (a, b))


def primitive_function(u0: RadonMeasure1D, anchor: Optional[float] = None) -> PiecewiseFunction:
    """Return U0 with U0(anchor) = 0 and U0' = u0 (jumps at atoms equal to masses).

    The primitive lives on the measure's window; ``anchor`` defaults to its
    left end.
    """
    lo, hi = u0.window
    anchor = lo if anchor is None else float(anchor)
    if not lo <= anchor <= hi:
        raise ValueError("anchor must lie in the window")
    xs = [a.x for a in u0.atoms]
    for x in xs:
        if abs(x - anchor) <= _LOC_TOL * max(1.0, abs(x)):
            raise AnchorOnAtom(f"anchor {anchor} coincides with an atom")
    masses = np.array([a.mass for a in u0.atoms])
    edges = [lo] + xs + [hi]
    home = int(np.searchsorted(np.asarray(xs), anchor, side="right")) if xs else 0
    base = float(u0.primitive_density(anchor))
    cum = np.concatenate([[0.0], np.cumsum(masses)]) if xs else np.zeros(1)
    pieces = []
    for p in range(len(edges) - 1):
        left, right = edges[p], edges[p + 1]
        # nodes hugging an atom would make piece derivatives ill-conditioned
        gap = 1e-3 * u0.dx
        inner = u0.grid[(u0.grid > left + gap) & (u0.grid < right - gap)]
        g = np.concatenate([[left], inner, [right]])
        vals = u0.primitive_density(g) - base + (cum[p] - cum[home])
        pieces.append(Piece(g, vals))
    return PiecewiseFunction(tuple(xs), tuple(pieces))


@dataclass(frozen=True, eq=False)
class SmoothedData:
    """Smoothed data compatible with Dirichlet values m1, m2 at the ends of [a, b]."""

    eps: float
    x: np.ndarray
    u0_eps: np.ndarray
    U0_eps: np.ndarray
    m1: float
    m2: float
    bounds: Dict[str, float] = field(default_factory=dict)

    @property
    def interval(self) -> Tuple[float, float]:
        return float(self.x[0]), float(self.x[-1])

    def primitive_at(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.U0_eps)

    def cell_averages(self, n_cells: int) -> Tuple[np.ndarray, np.ndarray]:
        """Faces and cell averages of u0_eps on a uniform grid of ``n_cells`` cells."""
        a, b = self.interval
        faces = np.linspace(a, b, n_cells + 1)
        return faces, np.diff(self.primitive_at(faces)) / np.diff(faces)


def partition_of_unity(x: np.ndarray, a: float, b: float, eps: float):
    """The three ramps f1, f2, f3 at the sqrt(eps) scales."""
    r = math.sqrt(eps)
    f1 = 1.0 - smooth_step((x - a - 2.0 * r) / r)
    f3 = smooth_step((x - (b - 3.0 * r)) / r)
    f2 = 1.0 - f1 - f3
    return f1, f2, f3


def smooth_initial(
    U0: "PiecewiseFunction | Piece",
    m1: float,
    m2: float,
    eps: float,
    n_nodes: int = 4001,
) -> SmoothedData:
    """Blend m1, U0' and m2 with the partition of unity and integrate from a.

    Raises
    ------
    DomainTooNarrow
        If ``6*sqrt(eps) >= b - a``.
    """
    if isinstance(U0, PiecewiseFunction):
        if U0.breakpoints:
            raise ValueError("smooth_initial expects a single continuous piece")
        piece = U0.pieces[0]
    else:
        piece = U0
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    a, b = piece.left, piece.right
    if 6.0 * math.sqrt(eps) >= b - a:
        raise DomainTooNarrow(f"6*sqrt({eps}) >= {b - a}")
    x = np.linspace(a, b, n_nodes)
    du = np.interp(x, piece.grid, piece.derivative())
    f1, f2, f3 = partition_of_unity(x, a, b, eps)
    u = m1 * f1 + f2 * du + m2 * f3
    U = float(piece(a)) + _cumulative(x, u)
    d1 = np.gradient(u, x)
    d2 = np.gradient(d1, x)
    bounds = {
        "l1_du": float(np.trapezoid(np.abs(d1), x)),
        "sqrt_eps_l1_d2u": float(math.sqrt(eps) * np.trapezoid(np.abs(d2), x)),
        "sup_u": float(np.max(np.abs(u))),
    }
    return SmoothedData(eps, x, u, U, float(m1), float(m2), bounds)


def choose_window(
    features: Sequence[float], speed: float, T: float, margin: float = 1.0
) -> Tuple[float, float]:
    """Window wide enough that no signal leaves it before time T."""
    lo, hi = min(features), max(features)
    reach = speed * T + margin
    return lo - reach, hi + reach
