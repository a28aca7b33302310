"""Bounded Lipschitz fluxes, their mollification and tail classification.

A :class:`HamiltonianSpec` bundles a vectorized flux ``H`` with numerical
estimates of ``sup|H|``, the Lipschitz constant and the behaviour of ``H``
at ``+-infinity``. Tails are probed decade by decade up to ``probe_range``;
per-decade extrema are extrapolated with Aitken's delta-squared process so
that slowly converging tails (``arctan``) are still recognised as having
a limit.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from .errors import InconclusiveTail, NonLipschitz, Unbounded

DEFAULT_PROBE_RANGE = 1.0e6
DEFAULT_CAP = 1.0e4
LIMIT_TOL = 1.0e-6
DEFAULT_K_GRID = tuple(np.linspace(0.25, 24.0, 96))

_CORE_HALF_WIDTH = 64.0
_CORE_STEP = 1.0 / 256.0

FluxLike = Union[str, Callable, Tuple[Sequence[float], Sequence[float]], Path]


@dataclass(frozen=True)
class Asymptotics:
    """limsup/liminf of H at +-infinity."""

    hstar_plus: float
    hstar_minus: float
    hlow_plus: float
    hlow_minus: float


@dataclass(frozen=True)
class Limits:
    hplus: Optional[float] = None
    hminus: Optional[float] = None


@dataclass(frozen=True)
class HamiltonianSpec:
    """Immutable flux description with cached numerical functionals."""

    name: str
    eval: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    sup_norm: float
    lip_norm: float
    asymptotics: Asymptotics
    limits: Limits
    probe_range: float
    sup_value: float
    inf_value: float

    def __call__(self, xi):
        arr = np.asarray(xi, dtype=float)
        out = self.eval(arr)
        if arr.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class HypothesisReport:
    """Outcome of :func:`classify_hypotheses` for both tails."""

    h4_plus: bool
    h4_minus: bool
    h5_plus: bool
    h5_minus: bool
    c0_plus: float
    c0_minus: float
    h6_plus: bool
    h6_minus: bool
    kbar: Optional[float]
    k_ul: Optional[float]
    h6_sign_plus: int
    h6_sign_minus: int
    eventually_constant_plus: bool
    eventually_constant_minus: bool
    k_grid: Tuple[float, ...]
    m_plus: Tuple[float, ...]
    m_minus: Tuple[float, ...]

    def regime(self, sign: int, limit_exists: bool) -> str:
        """Hypothesis regime relevant to an atom of the given sign."""
        if not limit_exists:
            return "no-limit"
        h4 = self.h4_plus if sign > 0 else self.h4_minus
        h5 = self.h5_plus if sign > 0 else self.h5_minus
        h6 = self.h6_plus if sign > 0 else self.h6_minus
        if not h4:
            return "eventually-constant"
        if h5:
            return "H5"
        if h6:
            return "H6"
        return "conjecture"

    def as_dict(self) -> dict:
        return {
            "h4_plus": self.h4_plus,
            "h4_minus": self.h4_minus,
            "h5_plus": self.h5_plus,
            "h5_minus": self.h5_minus,
            "c0_plus": self.c0_plus,
            "c0_minus": self.c0_minus,
            "h6_plus": self.h6_plus,
            "h6_minus": self.h6_minus,
            "kbar": self.kbar,
            "k_ul": self.k_ul,
            "h6_sign_plus": self.h6_sign_plus,
            "h6_sign_minus": self.h6_sign_minus,
            "eventually_constant_plus": self.eventually_constant_plus,
            "eventually_constant_minus": self.eventually_constant_minus,
            "k_grid": list(self.k_grid),
            "m_plus": list(self.m_plus),
            "m_minus": list(self.m_minus),
        }


# ---------------------------------------------------------------------------
# bump function and smooth step shared with measure_data
# ---------------------------------------------------------------------------

def bump(x) -> np.ndarray:
    """Unnormalized bump exp(-1/(1-x^2)) on (-1, 1), zero outside."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _build_step() -> PchipInterpolator:
    y = np.linspace(-1.0, 1.0, 4097)
    b = bump(y)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (b[1:] + b[:-1]) * np.diff(y))])
    cum /= cum[-1]
    r = 0.5 * (y + 1.0)
    return PchipInterpolator(r, cum)


_STEP = _build_step()
BUMP_MASS = float(np.trapezoid(bump(np.linspace(-1, 1, 200001)), np.linspace(-1, 1, 200001)))
#: max slope of :func:`smooth_step`, i.e. 2 * max of the normalized bump
STEP_MAX_SLOPE = 2.0 * math.exp(-1.0) / BUMP_MASS


def smooth_step(r) -> np.ndarray:
    """Monotone step rising from 0 at r <= 0 to 1 at r >= 1 (integrated bump)."""
    r = np.asarray(r, dtype=float)
    return _STEP(np.clip(r, 0.0, 1.0))


_SIMPSON_NODES = np.linspace(-1.0, 1.0, 129)


def _kernel_weights() -> np.ndarray:
    w = np.ones(129)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= (_SIMPSON_NODES[1] - _SIMPSON_NODES[0]) / 3.0
    kw = w * bump(_SIMPSON_NODES)
    return kw / kw.sum()


_KERNEL = _kernel_weights()


# ---------------------------------------------------------------------------
# flux registry
# ---------------------------------------------------------------------------

def _vectorized(fn: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def wrapped(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        try:
            y = np.asarray(fn(x), dtype=float)
        except (TypeError, ValueError):
            y = np.array([float(fn(float(v))) for v in x.ravel()]).reshape(x.shape)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape).astype(float)
        return y

    return wrapped


def _read_table(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    xs, hs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2:
                continue
            try:
                xs.append(float(row[0]))
                hs.append(float(row[1]))
            except ValueError:
                continue  # header line
    if len(xs) < 2:
        raise ValueError(f"flux table {path} needs at least two numeric rows")
    order = np.argsort(xs)
    return np.asarray(xs)[order], np.asarray(hs)[order]


def _table_flux(xs, hs) -> Callable[[np.ndarray], np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    hs = np.asarray(hs, dtype=float)
    return lambda x: np.interp(x, xs, hs)


_CALL_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def resolve_flux(formula: FluxLike) -> Tuple[str, Callable[[np.ndarray], np.ndarray]]:
    """Turn a registry name, CSV path, table or callable into (name, vectorized H)."""
    if callable(formula):
        return getattr(formula, "__name__", "callable"), _vectorized(formula)
    if isinstance(formula, tuple) and len(formula) == 2:
        return "table", _table_flux(*formula)
    text = str(formula)
    if text.endswith(".csv") and "(" not in text:
        return f"table({text})", _table_flux(*_read_table(text))
    m = _CALL_RE.match(text)
    if not m:
        raise ValueError(f"unrecognised flux {formula!r}")
    key, args = m.group(1), m.group(2)
    if key == "table":
        if not args:
            raise ValueError("table(...) needs a file path")
        return text.strip(), _table_flux(*_read_table(args.strip().strip("'\"")))
    params = [float(a) for a in args.split(",")] if args and args.strip() else []
    if key == "sin" and not params:
        return "sin", np.sin
    if key == "arctan" and not params:
        return "arctan", np.arctan
    if key == "exp_sin" and not params:
        # odd extension keeps the flux bounded on the whole line
        return "exp_sin", lambda x: np.exp(-np.abs(x)) * np.sin(x)
    if key == "zero" and not params:
        return "zero", lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if key == "constant" and len(params) == 1:
        c = params[0]
        return text.strip(), lambda x: np.full(np.shape(x), c, dtype=float)
    if key == "clipped_linear" and len(params) == 2:
        lo, hi = params
        return text.strip(), lambda x: np.clip(x, lo, hi)
    if key == "clipped_quadratic" and len(params) == 2:
        lo, hi = params
        return text.strip(), lambda x: 0.5 * np.clip(x, lo, hi) ** 2
    raise ValueError(f"unrecognised flux {formula!r}")


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------

def _decade_edges(probe_range: float) -> np.ndarray:
    n = max(1, int(math.ceil(math.log10(probe_range) - 1e-12)))
    return np.geomspace(1.0, probe_range, n + 1)


def _decade_points(lo: float, hi: float) -> np.ndarray:
    if hi - lo <= 64.0:
        return np.linspace(lo, hi, int((hi - lo) * 64) + 2)
    pts = [np.geomspace(lo, hi, 2049)]
    for s in np.geomspace(lo, hi - 16.0, 64):
        pts.append(np.linspace(s, s + 16.0, 513))
    return np.unique(np.concatenate(pts))


def _polish(fn, xs: np.ndarray, ys: np.ndarray, maximize: bool) -> float:
    i = int(np.argmax(ys) if maximize else np.argmin(ys))
    best = float(ys[i])
    if 0 < i < len(xs) - 1:
        sgn = -1.0 if maximize else 1.0
        res = minimize_scalar(
            lambda t: sgn * float(fn(np.array([t]))[0]),
            bounds=(xs[i - 1], xs[i + 1]),
            method="bounded",
            options={"xatol": 1e-10},
        )
        cand = sgn * float(res.fun)
        best = max(best, cand) if maximize else min(best, cand)
    return best


def _aitken(seq: Sequence[float]) -> float:
    if len(seq) < 3:
        return float(seq[-1])
    a0, a1, a2 = (float(v) for v in seq[-3:])
    d1, d2 = a1 - a0, a2 - a1
    if d1 == 0.0 or d2 == 0.0:
        return a2
    ratio = d2 / d1
    if not 0.0 < ratio <= 0.9:
        return a2
    return a2 - d2 * d2 / (d2 - d1)


def _tail_profile(fn, side: int, probe_range: float):
    """Per-decade (max, min) of H(side*xi), polished, plus all samples."""
    edges = _decade_edges(probe_range)
    maxima, minima, samples = [], [], []
    g = lambda x: fn(side * np.asarray(x, dtype=float))
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs = _decade_points(lo, hi)
        ys = g(xs)
        maxima.append(_polish(g, xs, ys, True))
        minima.append(_polish(g, xs, ys, False))
        samples.append((xs, ys))
    return maxima, minima, samples


def _lipschitz(fn, xs: np.ndarray, ys: np.ndarray) -> float:
    return float(np.max(np.abs(np.diff(ys)) / np.diff(xs))) if len(xs) > 1 else 0.0


def _estimate_norms(fn, core_half: float, step: float, cap: float):
    n = int(round(2 * core_half / step))
    xs = np.linspace(-core_half, core_half, n + 1)
    ys = fn(xs)
    if not np.all(np.isfinite(ys)):
        raise Unbounded("flux produced non-finite values")
    if np.max(np.abs(ys)) > cap:
        raise Unbounded(f"|H| exceeds cap {cap}")
    lips = [_lipschitz(fn, xs[::s], ys[::s]) for s in (4, 2, 1)]
    i = int(np.argmax(np.abs(np.diff(ys))))
    zx = np.linspace(xs[i] - 2 * step, xs[i + 1] + 2 * step, 4097)
    lip_zoom = _lipschitz(fn, zx, fn(zx))
    growing = lips[1] > 1.3 * lips[0] and lips[2] > 1.3 * lips[1]
    if growing or lip_zoom > 2.0 * max(lips[2], 1e-300):
        raise NonLipschitz(
            f"difference quotients grow under refinement: {lips + [lip_zoom]}"
        )
    return xs, ys, max(lips[2], lip_zoom)


def make_hamiltonian(
    formula: FluxLike,
    probe_range: float = DEFAULT_PROBE_RANGE,
    cap: float = DEFAULT_CAP,
    name: Optional[str] = None,
) -> HamiltonianSpec:
    """Build a :class:`HamiltonianSpec` from a registry name, table or callable.

    Parameters
    ----------
    formula : str, callable, (xs, hs) tuple or path
        ``sin``, ``arctan``, ``exp_sin``, ``zero``, ``constant(c)``,
        ``clipped_linear(lo,hi)``, ``clipped_quadratic(lo,hi)``,
        ``table(file.csv)`` or a bare ``.csv`` path.
    probe_range : float
        Half-width of the interval on which tails are probed.
    cap : float
        Magnitude above which the flux is rejected as unbounded.

    Raises
    ------
    Unbounded, NonLipschitz
    """
    if probe_range <= 1.0:
        raise ValueError("probe_range must exceed 1")
    label, fn = resolve_flux(formula)
    core = min(probe_range, _CORE_HALF_WIDTH)
    xs, ys, lip = _estimate_norms(fn, core, _CORE_STEP, cap)

    sup_v = _polish(fn, xs, ys, True)
    inf_v = _polish(fn, xs, ys, False)
    tails = {}
    for side in (1, -1):
        mx, mn, samples = _tail_profile(fn, side, probe_range)
        for sx, sy in samples:
            if not np.all(np.isfinite(sy)) or np.max(np.abs(sy)) > cap:
                raise Unbounded(f"|H| exceeds cap {cap} in the tail")
            # windows are dense (spacing 1/32), so their quotients are meaningful
            close = np.diff(sx) <= 1.0 / 16.0
            if np.any(close):
                q = np.abs(np.diff(sy))[close] / np.diff(sx)[close]
                lip = max(lip, float(np.max(q)))
        sup_v = max(sup_v, max(mx))
        inf_v = min(inf_v, min(mn))
        tails[side] = (_aitken(mx), _aitken(mn))

    hstar_p, hlow_p = tails[1]
    hstar_m, hlow_m = tails[-1]
    hlow_p, hstar_p = min(hlow_p, hstar_p), max(hlow_p, hstar_p)
    hlow_m, hstar_m = min(hlow_m, hstar_m), max(hlow_m, hstar_m)
    hplus = hminus = None
    if hstar_p - hlow_p < LIMIT_TOL:
        hplus = 0.5 * (hstar_p + hlow_p)
        hstar_p = hlow_p = hplus
    if hstar_m - hlow_m < LIMIT_TOL:
        hminus = 0.5 * (hstar_m + hlow_m)
        hstar_m = hlow_m = hminus
    # a supremum approached only at infinity is not attained by any sample
    sup_v = max(sup_v, hstar_p, hstar_m)
    inf_v = min(inf_v, hlow_p, hlow_m)

    return HamiltonianSpec(
        name=name or label,
        eval=fn,
        sup_norm=max(abs(sup_v), abs(inf_v)),
        lip_norm=lip,
        asymptotics=Asymptotics(hstar_p, hstar_m, hlow_p, hlow_m),
        limits=Limits(hplus, hminus),
        probe_range=float(probe_range),
        sup_value=sup_v,
        inf_value=inf_v,
    )


def mollify(h: HamiltonianSpec, eps: float) -> HamiltonianSpec:
    """Return H_eps(u) = g_eps(u) * ([eta_eps * H](u) - [eta_eps * H](0)).

    The convolution uses composite Simpson quadrature on 129 nodes of the
    normalized bump scaled to ``[-eps, eps]``. The cutoff equals 1 on
    ``|u| <= 1/eps`` and vanishes for ``|u| >= 1.99/eps``; its slope is at most
    ``STEP_MAX_SLOPE * eps / 0.99``, which stays below 1 for ``eps <= 0.59``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    base = h.eval
    offsets = eps * _SIMPSON_NODES
    shift = float(np.dot(_KERNEL, base(-offsets)))

    def conv(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        flat = u.ravel()
        out = np.empty_like(flat)
        chunk = 4096
        for s in range(0, flat.size, chunk):
            block = flat[s:s + chunk]
            out[s:s + chunk] = base(block[:, None] - offsets[None, :]) @ _KERNEL
        return out.reshape(u.shape)

    def h_eps(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        g = 1.0 - smooth_step((eps * np.abs(u) - 1.0) / 0.99)
        return g * (conv(u) - shift)

    reach = 2.0 / eps
    xs = np.unique(np.concatenate([
        np.linspace(-min(reach, _CORE_HALF_WIDTH), min(reach, _CORE_HALF_WIDTH), 16385),
        np.linspace(-reach, reach, 20001),
    ]))
    ys = h_eps(xs)
    sup_v = float(max(np.max(ys), 0.0))
    inf_v = float(min(np.min(ys), 0.0))
    return HamiltonianSpec(
        name=f"mollify({h.name},{eps:g})",
        eval=h_eps,
        sup_norm=max(abs(sup_v), abs(inf_v)),
        lip_norm=_lipschitz(h_eps, xs, ys),
        asymptotics=Asymptotics(0.0, 0.0, 0.0, 0.0),
        limits=Limits(0.0, 0.0),
        probe_range=h.probe_range,
        sup_value=sup_v,
        inf_value=inf_v,
    )


# ---------------------------------------------------------------------------
# hypothesis classification
# ---------------------------------------------------------------------------

def _tail_points(k0: float, probe_range: float) -> np.ndarray:
    dense_hi = min(probe_range, k0 + _CORE_HALF_WIDTH)
    pts = [np.linspace(k0, dense_hi, int((dense_hi - k0) * 256) + 2)]
    for lo, hi in zip(_decade_edges(probe_range)[:-1], _decade_edges(probe_range)[1:]):
        if hi > dense_hi:
            pts.append(_decade_points(max(lo, dense_hi), hi))
    return np.unique(np.concatenate(pts))


def tail_modulus(h: HamiltonianSpec, k_grid: Sequence[float], side: int = 1) -> np.ndarray:
    """Sampled M_k = ess sup of |H'| over (k, inf) (side=+1) or (-inf, -k) (side=-1)."""
    k = np.asarray(k_grid, dtype=float)
    xs = _tail_points(float(k[0]), h.probe_range)
    ys = h.eval(side * xs)
    q = np.abs(np.diff(ys)) / np.diff(xs)
    suffix = np.maximum.accumulate(q[::-1])[::-1]
    idx = np.clip(np.searchsorted(xs, k, side="left"), 0, len(q) - 1)
    return suffix[idx]


def _eventually_constant(h: HamiltonianSpec, k_from: float, side: int) -> bool:
    xs = _tail_points(k_from, h.probe_range)
    ys = h.eval(side * xs)
    return float(np.max(ys) - np.min(ys)) <= 1e-13 * (1.0 + h.sup_norm)


def _h6(h: HamiltonianSpec, k: np.ndarray, limit: float, side: int):
    xs = _tail_points(float(k[0]), h.probe_range)
    d = h.eval(side * xs) - limit
    final = np.sign(d[-1])
    if final == 0.0:
        return False, None, 0
    bad = np.nonzero(np.sign(d) != final)[0]
    start = xs[bad[-1]] if bad.size else -np.inf
    ok = k[k > start]
    if ok.size == 0:
        return False, None, 0
    return True, float(ok[0]), int(final)


def classify_hypotheses(
    h: HamiltonianSpec, k_grid: Optional[Sequence[float]] = None
) -> HypothesisReport:
    """Evaluate the tail hypotheses on a positive, increasing ``k_grid``.

    The minus side is probed at ``-k`` for every ``k`` in the grid.
    """
    k = np.asarray(DEFAULT_K_GRID if k_grid is None else k_grid, dtype=float)
    if k.ndim != 1 or k.size < 4 or np.any(np.diff(k) <= 0) or k[0] <= 0:
        raise ValueError("k_grid must be positive, increasing, with at least 4 points")
    if h.probe_range < 10.0 * k[-1] or len(_decade_edges(h.probe_range)) < 4:
        raise InconclusiveTail(
            f"probe_range {h.probe_range:g} too short for k up to {k[-1]:g}"
        )
    k_mid = float(k[len(k) // 2])
    out = {}
    for side, limit in ((1, h.limits.hplus), (-1, h.limits.hminus)):
        m = tail_modulus(h, k, side)
        ev_const = _eventually_constant(h, k_mid, side)
        h4 = limit is not None and not ev_const
        h5, c0 = False, 0.0
        h6, thr, sgn = False, None, 0
        if h4:
            vals = np.abs(h.eval(side * k) - limit)
            tail = slice(len(k) // 2, None)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(m > 0, vals / m, 0.0)
            c0 = float(np.max(ratio[tail]))
            decays = m[-1] > 0 and m[-1] <= 1e-3 * m[0]
            h5 = bool(decays and c0 > 1e-2)
            h6, thr, sgn = _h6(h, k, limit, side)
        out[side] = (m, ev_const, h4, h5, c0, h6, thr, sgn)

    mp, evp, h4p, h5p, c0p, h6p, kbar, sp = out[1]
    mm, evm, h4m, h5m, c0m, h6m, kul, sm = out[-1]
    return HypothesisReport(
        h4_plus=h4p, h4_minus=h4m, h5_plus=h5p, h5_minus=h5m,
        c0_plus=c0p, c0_minus=c0m, h6_plus=h6p, h6_minus=h6m,
        kbar=kbar, k_ul=None if kul is None else -kul,
        h6_sign_plus=sp, h6_sign_minus=sm,
        eventually_constant_plus=evp, eventually_constant_minus=evm,
        k_grid=tuple(float(v) for v in k),
        m_plus=tuple(float(v) for v in mp),
        m_minus=tuple(float(v) for v in mm),
    )
