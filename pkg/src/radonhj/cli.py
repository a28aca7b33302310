"""Scenario runner: YAML configs in, JSON verdicts, CSV series and a manifest out.

Verbs
-----
``run <config>``
    One scenario. Exit 0 if every requested check passes, 1 if one fails,
    2 on a configuration error (nothing written), 3 if the surrogate
    sequence did not converge (partial artifacts kept).
``suite [dir]``
    Every ``*.yaml`` in ``dir`` (the bundled standard suite by default),
    on ``RADONHJ_WORKERS`` worker processes. Nonzero exit iff any scenario fails.
``classify <flux>``
    Print the hypothesis report of a flux.
``sweep <template> --param key=v1,v2 ...``
    Run the template over the Cartesian product of parameter values.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import __version__
from .entropy_limit import (
    MeasureSolution,
    RefinementSchedule,
    adversarial_field,
    compatibility_diagnostic,
    default_tol_mass,
    entropy_residual,
    solve_measure_cauchy,
    trace_envelope_violation,
)
from .errors import ConfigError, InconclusiveTail, MonotonicityViolation, NotConverged
from .hamiltonian import classify_hypotheses, make_hamiltonian
from .hj_layer import check_correspondence, jump_decay_check, reconstruct_hj
from .measure_data import Atom, RadonMeasure1D, choose_window, primitive_function
from .verifier import check_bounds, check_comparison, check_transport, horizon_time
from .viscous_solver import SCHEME_ID

log = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
STANDARD_SUITE = SCENARIO_DIR / "standard"
NEGATIVE_SUITE = SCENARIO_DIR / "negative_control"
WORKERS_ENV = "RADONHJ_WORKERS"

KINDS = ("cauchy", "comparison", "transport", "adversarial")
CAUCHY_CHECKS = ("bounds", "monotone", "conservation", "correspondence", "traces",
                 "jumps", "entropy", "compatibility")
ADVERSARIAL_CHECKS = ("entropy", "compatibility")
PROFILES = ("zero", "gaussian", "gauss_cos")

CONSERVATION_TOL = 1e-3
ENTROPY_TOL = 5e-2
TRACE_TOL = 1e-6
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialSpec:
    window: Optional[Tuple[float, float]]
    nodes: int
    profile: str
    amplitude: float
    width: float
    center: float
    frequency: float
    atoms: Tuple[Atom, ...]

    def density(self, x: np.ndarray) -> np.ndarray:
        if self.profile == "zero":
            return np.zeros_like(x)
        g = self.amplitude * np.exp(-(((x - self.center) / self.width) ** 2))
        if self.profile == "gauss_cos":
            g = g * np.cos(self.frequency * (x - self.center))
        return g

    def features(self) -> List[float]:
        pts = [a.x for a in self.atoms]
        if self.profile != "zero":
            pts += [self.center - 3.0 * self.width, self.center + 3.0 * self.width]
        return pts or [0.0]

    def build(self, window: Tuple[float, float]) -> RadonMeasure1D:
        return RadonMeasure1D.from_function(
            self.density, window, self.nodes, [(a.x, a.mass) for a in self.atoms]
        )

    def as_dict(self) -> dict:
        return {"window": None if self.window is None else list(self.window),
                "nodes": self.nodes, "profile": self.profile, "amplitude": self.amplitude,
                "width": self.width, "center": self.center, "frequency": self.frequency,
                "atoms": [{"x": a.x, "mass": a.mass} for a in self.atoms]}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario configuration."""

    name: str
    kind: str
    flux: Optional[str]
    initial: Optional[InitialSpec]
    initial_v: Optional[InitialSpec]
    T_max: Optional[float]  # None: derived from the analytic horizons
    refine: RefinementSchedule
    checks: Tuple[str, ...]
    strict: bool
    eps: Optional[float] = None
    n_cells: Optional[int] = None
    source: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "name": self.name, "kind": self.kind, "flux": self.flux,
            "initial": None if self.initial is None else self.initial.as_dict(),
            "initial_v": None if self.initial_v is None else self.initial_v.as_dict(),
            "T_max": "auto" if self.T_max is None else self.T_max,
            "refine": self.refine.as_dict(), "checks": list(self.checks),
            "strict": self.strict, "eps": self.eps, "n_cells": self.n_cells,
        }


_TOP_KEYS = {"name", "kind", "flux", "initial", "initial_v", "T_max", "refine", "checks",
             "strict", "eps", "n_cells", "description"}
_INITIAL_KEYS = {"window", "nodes", "density", "atoms"}
_DENSITY_KEYS = {"profile", "amplitude", "width", "center", "frequency"}
_REFINE_KEYS = {"n_cells", "surrogate_factors", "eps_factor", "tol_conv", "bracket_tol",
                "n_snapshots", "table_delta", "interior_fraction", "max_steps"}


def _unknown(obj: dict, allowed: set, where: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _number(v: Any, where: str, positive: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(f"{where}: must be positive")
    return float(v)


def _parse_initial(obj: Any, where: str) -> InitialSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected a mapping")
    _unknown(obj, _INITIAL_KEYS, where)
    window = obj.get("window")
    if window is not None:
        if not isinstance(window, (list, tuple)) or len(window) != 2:
            raise ConfigError(f"{where}.window: expected [a, b]")
        a, b = (_number(v, f"{where}.window") for v in window)
        if not a < b:
            raise ConfigError(f"{where}.window: need a < b")
        window = (a, b)
    nodes = obj.get("nodes", 4001)
    if not isinstance(nodes, int) or nodes < 3:
        raise ConfigError(f"{where}.nodes: expected an integer >= 3")
    dens = obj.get("density", {"profile": "zero"})
    if not isinstance(dens, dict):
        raise ConfigError(f"{where}.density: expected a mapping")
    _unknown(dens, _DENSITY_KEYS, f"{where}.density")
    profile = dens.get("profile", "zero")
    if profile not in PROFILES:
        raise ConfigError(f"{where}.density.profile: one of {PROFILES}")
    atoms = []
    for n, a in enumerate(obj.get("atoms", []) or []):
        if not isinstance(a, dict) or set(a) != {"x", "mass"}:
            raise ConfigError(f"{where}.atoms[{n}]: expected {{x, mass}}")
        m = _number(a["mass"], f"{where}.atoms[{n}].mass")
        if m == 0:
            raise ConfigError(f"{where}.atoms[{n}].mass: must be nonzero")
        atoms.append(Atom(_number(a["x"], f"{where}.atoms[{n}].x"), m))
    return InitialSpec(
        window=window, nodes=nodes, profile=profile,
        amplitude=_number(dens.get("amplitude", 1.0), f"{where}.density.amplitude"),
        width=_number(dens.get("width", 1.0), f"{where}.density.width", positive=True),
        center=_number(dens.get("center", 0.0), f"{where}.density.center"),
        frequency=_number(dens.get("frequency", 2.0), f"{where}.density.frequency"),
        atoms=tuple(sorted(atoms, key=lambda a: a.x)),
    )


def parse_scenario(obj: Any, source: Optional[str] = None) -> Scenario:
    """Validate a raw config mapping.

    Raises
    ------
    ConfigError
        On any missing, unknown or ill-typed entry.
    """
    if not isinstance(obj, dict):
        raise ConfigError("scenario must be a mapping")
    _unknown(obj, _TOP_KEYS, "scenario")
    name = obj.get("name")
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError("name: expected a non-empty string without '/'")
    kind = obj.get("kind", "cauchy")
    if kind not in KINDS:
        raise ConfigError(f"kind: one of {KINDS}")
    flux = obj.get("flux")
    if kind in ("cauchy", "comparison"):
        if not isinstance(flux, str):
            raise ConfigError("flux: expected a registry name")
        try:
            make_hamiltonian(flux)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"flux: {exc}") from exc
    elif flux is not None:
        raise ConfigError(f"flux: not used by kind {kind!r}")
    initial = None if kind == "adversarial" else _parse_initial(obj.get("initial"), "initial")
    initial_v = None
    if kind == "comparison":
        initial_v = _parse_initial(obj.get("initial_v"), "initial_v")
        if initial_v.window != initial.window or initial_v.nodes != initial.nodes:
            raise ConfigError("comparison: u and v must share window and nodes")
    elif "initial_v" in obj:
        raise ConfigError("initial_v: only used by kind 'comparison'")
    T = obj.get("T_max", "auto")
    if T == "auto":
        if kind != "cauchy":
            raise ConfigError("T_max: 'auto' only for kind 'cauchy'")
        T = None
    else:
        T = _number(T, "T_max", positive=True)
    ref = obj.get("refine", {}) or {}
    if not isinstance(ref, dict):
        raise ConfigError("refine: expected a mapping")
    _unknown(ref, _REFINE_KEYS, "refine")
    ref = dict(ref)
    if "surrogate_factors" in ref:
        ref["surrogate_factors"] = tuple(ref["surrogate_factors"])
    try:
        refine = RefinementSchedule(**ref)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"refine: {exc}") from exc
    allowed = {"cauchy": CAUCHY_CHECKS, "adversarial": ADVERSARIAL_CHECKS}.get(kind, ())
    checks = obj.get("checks", list(allowed))
    if not isinstance(checks, list) or any(c not in allowed for c in checks):
        raise ConfigError(f"checks: subset of {list(allowed)}")
    strict = obj.get("strict", True)
    if not isinstance(strict, bool):
        raise ConfigError("strict: expected a boolean")
    eps = n_cells = None
    if kind == "transport":
        eps = _number(obj.get("eps"), "eps", positive=True)
        n_cells = obj.get("n_cells")
        if not isinstance(n_cells, int) or n_cells < 8:
            raise ConfigError("n_cells: expected an integer >= 8")
        if initial.atoms or initial.window is None:
            raise ConfigError("transport: needs an explicit window and no atoms")
    elif "eps" in obj or "n_cells" in obj:
        raise ConfigError("eps/n_cells: only used by kind 'transport'")
    return Scenario(name, kind, flux, initial, initial_v, T, refine, tuple(checks), strict,
                    eps, n_cells, source)


def load_scenario(path: os.PathLike) -> Scenario:
    try:
        with open(path) as fh:
            obj = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return parse_scenario(obj, str(path))


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

@dataclass
class ScenarioResult:
    name: str
    exit_code: int
    verdict: Dict[str, Any]
    out_dir: Optional[Path] = None

    @property
    def passed(self) -> bool:
        return self.exit_code == EXIT_OK


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def write_json(path: Path, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_series(out: Path, msol: MeasureSolution, hj=None) -> None:
    with open(out / "atoms.csv", "w") as fh:
        fh.write("t," + ",".join(f"C{j}" for j in range(len(msol.atoms))) + "\n")
        C = msol.atom_mass_at_snapshots()
        for i, t in enumerate(msol.t):
            fh.write(f"{t:.10g}" + "".join(f",{v:.12g}" for v in C[i]) + "\n")
    with open(out / "traces.csv", "w") as fh:
        fh.write("x,side,t,value\n")
        for tr in msol.traces:
            for t, v in zip(tr.t_grid, tr.values):
                fh.write(f"{tr.location:.10g},{tr.side},{t:.10g},{v:.12g}\n")
    stride_x = max(1, msol.x.size // 400)
    stride_t = max(1, msol.t.size // 50)
    with open(out / "density.csv", "w") as fh:
        fh.write("t,x,u\n")
        for i in range(0, msol.t.size, stride_t):
            for k in range(0, msol.x.size, stride_x):
                fh.write(f"{msol.t[i]:.10g},{msol.x[k]:.10g},{msol.u[i, k]:.12g}\n")
    if hj is not None:
        with open(out / "jumps.csv", "w") as fh:
            fh.write("t," + ",".join(f"J{j}" for j in range(len(hj.breakpoints))) + "\n")
            for i, t in enumerate(hj.t):
                fh.write(f"{t:.10g}" + "".join(f",{v:.12g}" for v in hj.jumps[i]) + "\n")
        hj.to_csv(out / "hj.csv", stride=max(stride_x, stride_t))


def _k_grid_for(u: np.ndarray) -> np.ndarray:
    lo, hi = float(np.min(u)), float(np.max(u))
    return np.linspace(lo, hi, 9) if hi > lo else np.array([lo])


def _run_cauchy(sc: Scenario, out: Path) -> Tuple[int, dict]:
    h = make_hamiltonian(sc.flux)
    try:
        hyp = classify_hypotheses(h)
    except InconclusiveTail:
        hyp = None
    probe = None
    if sc.T_max is None:
        probe = sc.initial.build(sc.initial.window or choose_window(sc.initial.features(), 0.0, 0.0, 3.0))
    T = horizon_time(h, probe, hyp) if sc.T_max is None else sc.T_max
    window = sc.initial.window or choose_window(sc.initial.features(), h.lip_norm, T, 1.0)
    u0 = sc.initial.build(window)
    verdict: Dict[str, Any] = {"scenario": sc.name, "flux": h.name, "T": T,
                               "window": list(window), "checks": {}}
    if hyp is not None:
        verdict["hypotheses"] = {"plus": hyp.regime(1, h.limits.hplus is not None),
                                 "minus": hyp.regime(-1, h.limits.hminus is not None)}
    try:
        msol = solve_measure_cauchy(h, u0, T, sc.refine, strict=sc.strict)
    except NotConverged as exc:
        verdict["error"] = {"type": "NotConverged", "message": str(exc),
                            "residuals": exc.residuals}
        if exc.partial is not None:
            _write_series(out, exc.partial)
            write_json(out / "solution.json", exc.partial.to_json(trace_stride=4))
        return EXIT_NOT_CONVERGED, verdict
    except MonotonicityViolation as exc:
        verdict["checks"]["monotone"] = {"passed": False, "message": str(exc)}
        return EXIT_FAIL, verdict
    checks = verdict["checks"]
    hj = None
    if any(c in sc.checks for c in ("bounds", "correspondence", "jumps")):
        hj = reconstruct_hj(msol, primitive_function(u0))
    if "monotone" in sc.checks:
        # the solver refuses to return a non-monotone trajectory
        checks["monotone"] = {"passed": True, "n_atoms": len(msol.atoms)}
    if "bounds" in sc.checks:
        rep = check_bounds(msol, hj, h, hyp)
        checks["bounds"] = rep.as_dict()
        verdict["table"] = rep.summary_table(sc.name).splitlines()
    if "conservation" in sc.checks:
        scale = float(np.sum(np.abs(msol.u[0])) * msol.dx + sum(abs(a.c) for a in msol.atoms))
        rel = float(np.max(np.abs(msol.conservation_defect()))) / max(scale, 1e-300)
        checks["conservation"] = {"relative_defect": rel, "tol": CONSERVATION_TOL,
                                  "passed": rel <= CONSERVATION_TOL}
    if "correspondence" in sc.checks:
        rep = check_correspondence(msol, hj)
        sup = u0.sup_density()
        tol_mass = max([default_tol_mass(a.c, msol.dx, sup) for a in msol.atoms] or [0.0])
        ok = rep.jump_vs_mass <= 2.0 * tol_mass if msol.atoms else True
        checks["correspondence"] = dict(rep.as_dict(), tol_mass=tol_mass, passed=bool(ok))
    if "jumps" in sc.checks:
        reps = jump_decay_check(hj, h)
        checks["jumps"] = {"atoms": [r.as_dict() for r in reps],
                           "passed": all(r.passed for r in reps)}
    if "traces" in sc.checks:
        rows = []
        for tr in msol.traces:
            j = min(range(len(msol.atoms)), key=lambda n: abs(msol.atom_x[n] - tr.location))
            v = trace_envelope_violation(tr, h, 1 if msol.atoms[j].c > 0 else -1, msol.surrogate)
            rows.append({"x": tr.location, "side": tr.side, "violation": v})
        checks["traces"] = {"traces": rows, "tol": TRACE_TOL,
                            "passed": all(r["violation"] <= TRACE_TOL for r in rows)}
    fld = msol.field() if any(c in sc.checks for c in ("entropy", "compatibility")) else None
    if "entropy" in sc.checks:
        rep = entropy_residual(fld, h, _k_grid_for(msol.u), exclude=msol.atom_x,
                               tol=ENTROPY_TOL, eps=msol.eps)
        checks["entropy"] = rep.as_dict()
    if "compatibility" in sc.checks:
        rows, ok = [], True
        for j, a in enumerate(msol.atoms):
            t_end = a.bracket.t_lo if a.bracket is not None and a.bracket.extinguished else None
            if t_end is not None and t_end <= msol.t[1]:
                continue
            traces = (msol.trace(j, 1), msol.trace(j, -1))
            rep = compatibility_diagnostic(fld, h, a.x, 1 if a.c > 0 else -1,
                                           _k_grid_for(msol.u), msol.dx, t_end, traces)
            rows.append(dict(rep.as_dict(), x=a.x))
            ok = ok and rep.passed
        checks["compatibility"] = {"atoms": rows, "passed": ok}
    verdict["solver"] = {"eps": msol.eps, "dt": msol.dt, "dx": msol.dx,
                         "surrogate": msol.surrogate, "residuals": msol.residuals,
                         "extrapolated_waiting": msol.extrapolated_waiting}
    _write_series(out, msol, hj)
    write_json(out / "solution.json", msol.to_json(trace_stride=4, atom_stride=1))
    passed = all(c.get("passed", True) for c in checks.values())
    return (EXIT_OK if passed else EXIT_FAIL), verdict


def _run_comparison(sc: Scenario, out: Path) -> Tuple[int, dict]:
    h = make_hamiltonian(sc.flux)
    feats = sc.initial.features() + sc.initial_v.features()
    window = sc.initial.window or choose_window(feats, h.lip_norm, sc.T_max, 1.0)
    u0, v0 = sc.initial.build(window), sc.initial_v.build(window)
    rep = check_comparison(u0, v0, h, sc.T_max, sc.refine)
    verdict = {"scenario": sc.name, "flux": h.name, "T": sc.T_max, "window": list(window),
               "checks": {"comparison": rep.as_dict()}}
    return (EXIT_OK if rep.passed else EXIT_FAIL), verdict


def _run_transport(sc: Scenario, out: Path) -> Tuple[int, dict]:
    u0 = sc.initial.build(sc.initial.window)
    rep = check_transport(u0, sc.eps, sc.n_cells, sc.T_max)
    verdict = {"scenario": sc.name, "flux": "clipped_linear(-1,1)", "T": sc.T_max,
               "window": list(sc.initial.window), "checks": {"transport": rep.as_dict()}}
    return (EXIT_OK if rep.passed else EXIT_FAIL), verdict


def _run_adversarial(sc: Scenario, out: Path) -> Tuple[int, dict]:
    T = 1.0 if sc.T_max is None else sc.T_max
    fld, h, x0 = adversarial_field(T=T)
    checks: Dict[str, Any] = {}
    if "entropy" in sc.checks:
        rep = entropy_residual(fld, h, np.linspace(0.0, 1.0, 9), exclude=[x0], tol=ENTROPY_TOL)
        checks["entropy"] = rep.as_dict()
    if "compatibility" in sc.checks:
        rep = compatibility_diagnostic(fld, h, x0, 1, np.linspace(0.0, 1.0, 9), fld.dx)
        checks["compatibility"] = rep.as_dict()
    verdict = {"scenario": sc.name, "flux": h.name, "T": T, "checks": checks}
    passed = all(c.get("passed", True) for c in checks.values())
    return (EXIT_OK if passed else EXIT_FAIL), verdict


_RUNNERS = {"cauchy": _run_cauchy, "comparison": _run_comparison,
            "transport": _run_transport, "adversarial": _run_adversarial}


def manifest(sc: Scenario, seed: Optional[int]) -> dict:
    return {
        "package": "radonhj", "version": __version__, "scheme": SCHEME_ID,
        "numpy": np.__version__, "seed": seed, "scenario": sc.as_dict(),
        "tolerances": {"conservation": CONSERVATION_TOL, "entropy": ENTROPY_TOL, "traces": TRACE_TOL},
    }


def run_scenario(sc: Scenario, out_base: os.PathLike, seed: Optional[int] = None) -> ScenarioResult:
    """Execute a parsed scenario and write its artifacts under ``out_base/<name>``."""
    out = Path(out_base) / sc.name
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %s (%s)", sc.name, sc.kind)
    code, verdict = _RUNNERS[sc.kind](sc, out)
    verdict["passed"] = code == EXIT_OK
    verdict["exit_code"] = code
    write_json(out / "verdict.json", verdict)
    write_json(out / "manifest.json", manifest(sc, seed))
    if "table" in verdict:
        print("\n".join(verdict["table"]))
    return ScenarioResult(sc.name, code, verdict, out)


def _suite_worker(args: Tuple[str, str, Optional[int]]) -> Tuple[str, int, str]:
    path, out_base, seed = args
    try:
        sc = load_scenario(path)
        res = run_scenario(sc, out_base, seed)
        return sc.name, res.exit_code, ""
    except ConfigError as exc:
        return Path(path).stem, EXIT_CONFIG, str(exc)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def run_suite(directory: os.PathLike, out_base: os.PathLike, seed: Optional[int] = None,
              workers: Optional[int] = None) -> Tuple[int, dict]:
    """Run every ``*.yaml`` in ``directory``; nonzero status iff any scenario fails."""
    paths = sorted(str(p) for p in Path(directory).glob("*.yaml"))
    report: Dict[str, Any] = {"directory": str(directory), "scenarios": {}}
    if not paths:
        log.warning("no scenarios in %s", directory)
        report["warning"] = "empty suite"
        report["passed"] = True
        Path(out_base).mkdir(parents=True, exist_ok=True)
        write_json(Path(out_base) / "suite.json", report)
        return EXIT_OK, report
    n = workers or worker_count()
    jobs = [(p, str(out_base), seed) for p in paths]
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_suite_worker, jobs))
    else:
        results = [_suite_worker(j) for j in jobs]
    for name, code, msg in results:
        report["scenarios"][name] = {"exit_code": code, "passed": code == EXIT_OK,
                                     **({"error": msg} if msg else {})}
        print(f"{'PASS' if code == EXIT_OK else 'FAIL'}  {name}")
    report["passed"] = all(code == EXIT_OK for _, code, _ in results)
    Path(out_base).mkdir(parents=True, exist_ok=True)
    write_json(Path(out_base) / "suite.json", report)
    return (EXIT_OK if report["passed"] else EXIT_FAIL), report


def _set_dotted(obj: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    cur = obj
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"--param {key}: {p} is not a mapping")
    cur[parts[-1]] = value


def parse_params(items: Sequence[str]) -> List[Tuple[str, List[Any]]]:
    out = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--param {item!r}: expected key=v1,v2,...")
        key, vals = item.split("=", 1)
        try:
            parsed = [yaml.safe_load(v) for v in vals.split(",") if v.strip()]
        except yaml.YAMLError as exc:
            raise ConfigError(f"--param {item!r}: {exc}") from exc
        out.append((key.strip(), parsed))
    return out


def run_sweep(template: os.PathLike, params: Sequence[str], out_base: os.PathLike,
              seed: Optional[int] = None) -> Tuple[int, dict]:
    """Grid sweep over dotted config keys; records brackets for every combination."""
    try:
        with open(template) as fh:
            base = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load template {template}: {exc}") from exc
    grid = parse_params(params)
    scenarios = []
    for combo in itertools.product(*[v for _, v in grid]):
        obj = copy.deepcopy(base)
        tag = []
        for (key, _), val in zip(grid, combo):
            _set_dotted(obj, key, val)
            tag.append(f"{key.split('.')[-1]}={val}")
        obj["name"] = f"{base.get('name', 'sweep')}__" + "__".join(tag)
        scenarios.append((obj, dict(zip([k for k, _ in grid], combo))))
    parsed = [(parse_scenario(obj), vals) for obj, vals in scenarios]
    rows = []
    for sc, vals in parsed:
        res = run_scenario(sc, out_base, seed)
        atoms = res.verdict.get("checks", {}).get("bounds", {}).get("atoms", [])
        rows.append({"params": vals, "name": sc.name, "exit_code": res.exit_code,
                     "brackets": [a["bracket"] for a in atoms]})
    report = {"template": str(template), "rows": rows,
              "passed": all(r["exit_code"] == EXIT_OK for r in rows)}
    write_json(Path(out_base) / "sweep.json", report)
    return (EXIT_OK if report["passed"] else EXIT_FAIL), report


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radonhj", description=__doc__.split("\n")[0])
    p.add_argument("--seed", type=int, default=None, help="recorded in manifests; no randomness is used")
    p.add_argument("--out", default="radonhj_out", help="output base directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config")
    s = sub.add_parser("suite", help="run a directory of scenarios")
    s.add_argument("directory", nargs="?", default=str(STANDARD_SUITE))
    c = sub.add_parser("classify", help="print the hypothesis report of a flux")
    c.add_argument("flux")
    w = sub.add_parser("sweep", help="grid sweep over a template scenario")
    w.add_argument("template")
    w.add_argument("--param", action="append", default=[], metavar="KEY=V1,V2")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            sc = load_scenario(args.config)
            res = run_scenario(sc, args.out, args.seed)
            print(f"{'PASS' if res.passed else 'FAIL'}  {sc.name}  -> {res.out_dir}")
            return res.exit_code
        if args.verb == "suite":
            code, _ = run_suite(args.directory, args.out, args.seed)
            return code
        if args.verb == "classify":
            try:
                h = make_hamiltonian(args.flux)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            rep = classify_hypotheses(h)
            out = {"flux": h.name, "sup_norm": h.sup_norm, "lip_norm": h.lip_norm,
                   "limits": {"plus": h.limits.hplus, "minus": h.limits.hminus},
                   "regime": {"plus": rep.regime(1, h.limits.hplus is not None),
                              "minus": rep.regime(-1, h.limits.hminus is not None)},
                   "hypotheses": rep.as_dict()}
            print(json.dumps(_json_safe(out), sort_keys=True, indent=1))
            return EXIT_OK
        if args.verb == "sweep":
            code, _ = run_sweep(args.template, args.param, args.out, args.seed)
            return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InconclusiveTail as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
