"""Experiment runner: JSON configs in, field files, report records and plot data out.

Config schema (version 1)::

    {
      "schema": 1,
      "grid": {"n": 1, "box": [[0, 1]], "cells": [128] | "h": ..., "T": 0.5, "dt": ... | "steps": ...},
      "problem": {
        "kind": "linear_homogeneous" | "quasilinear",
        "coefficient": 1.0 | {"family": "checkerboard", "contrast": 10, "period": 0.5} | {"file": "a.json"},
        "structure": {"family": "linear" | "bounded_nonlinear", ...},
        "initial": {"type": "sine" | "constant" | "coordinate" | "gaussian" | "zero"} | {"file": ...},
        "boundary": {"kind": "dirichlet" | "no_flux" | "farfield", "value": ...},
        "scheme": {"weight": 1.0, "linear_solver": "direct"}
      },
      "action": "solve" | "kernel" | "ck-check" | "gaussian-fit" | "green" | "validate-structure"
                | "certify.<theorem>" | "widder.<op>",
      "params": {...},
      "tolerances": {...},
      "sweep": {"path": "problem.coefficient.contrast", "values": [1, 10, 100]},
      "seed": 0,
      "output": "out"
    }

Reports are JSON lines appended to ``<out>/reports.jsonl``; every record
carries the config hash and the grid hash.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import certify as C
from . import kernel as K
from . import widder as W
from .fieldio import FieldFormatError, canonical_json, read_field, to_jsonable, write_columns, write_field
from .grid import GridError, SpaceTimeGrid, make_grid, parabolic_boundary
from .solver import (
    Boundary,
    ProblemSpec,
    SolutionField,
    SolverConfig,
    mass_balance,
    random_bumps,
    solve,
    weak_residual,
)
from .structure import (
    CoefficientField,
    ExponentPair,
    LinearCoefficients,
    StructureBounds,
    StructureFunctions,
    bounded_nonlinear_structure,
    check_exponent_pair,
    compute_theta,
    constant_field,
    linear_structure,
    named_field,
    random_samples,
    verify_structure,
)

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "RunError",
    "ReportSchemaError",
    "ExperimentConfig",
    "ReportRecord",
    "run",
    "write_reports",
    "read_reports",
    "record_baseline",
    "compare_baseline",
    "main",
    "OUT_ENV",
]

SCHEMA_VERSION = 1
OUT_ENV = "ROUGHHEAT_OUT"
REPORT_FILE = "reports.jsonl"

EXIT_PASS, EXIT_CERT_FAIL, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

ACTIONS = ("solve", "kernel", "ck-check", "gaussian-fit", "green", "validate-structure")
THEOREMS = (
    "max_principle",
    "min_principle",
    "local_bound",
    "harnack",
    "pointwise_harnack",
    "hoelder",
    "limit_behavior",
    "caccioppoli",
)
WIDDER_OPS = ("growth", "trace", "roundtrip")

DEFAULT_TOLERANCES = {
    "weak_residual": 5e-2,
    "mass": 1e-10,
    "ck": 2e-2,
    "atom_mass_rel": 0.02,
    "trace_rel": 0.02,
    "baseline_rel": 1e-9,
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


class RunError(RuntimeError):
    """A downstream failure, tagged with the module it came from."""

    def __init__(self, module: str, msg: str):
        super().__init__(f"[{module}] {msg}")
        self.module = module


class ReportSchemaError(ValueError):
    pass


def _hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _action_ok(action: str) -> bool:
    if action in ACTIONS:
        return True
    head, _, tail = action.partition(".")
    return (head == "certify" and tail in THEOREMS) or (head == "widder" and tail in WIDDER_OPS)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    base_dir: Path = Path(".")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
        cfg = cls(raw, path.parent)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, raw: dict, base_dir=".") -> "ExperimentConfig":
        cfg = cls(copy.deepcopy(raw), Path(base_dir))
        cfg.validate()
        return cfg

    @property
    def action(self) -> str:
        return self.raw["action"]

    @property
    def params(self) -> dict:
        return self.raw.get("params", {})

    @property
    def problem(self) -> dict:
        return self.raw.get("problem", {})

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def tolerances(self) -> dict:
        return {**DEFAULT_TOLERANCES, **self.raw.get("tolerances", {})}

    def with_overrides(self, **kw) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        for k, v in kw.items():
            if v is not None:
                raw[k] = v
        return ExperimentConfig.from_dict(raw, self.base_dir)

    @property
    def hash(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        return _hash({k: v for k, v in self.raw.items() if k != "output"})

    def resolve(self, ref: str) -> Path:
        p = Path(ref)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        r = self.raw
        if not isinstance(r, dict):
            raise ConfigError("config", "must be a JSON object")
        if r.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError("schema", f"unsupported schema {r.get('schema')}; expected {SCHEMA_VERSION}")
        if "action" not in r:
            raise ConfigError("action", "missing")
        if not _action_ok(r["action"]):
            raise ConfigError("action", f"unknown action {r['action']!r}")
        if "grid" not in r:
            raise ConfigError("grid", "missing")
        g = r["grid"]
        for key in ("n", "box", "T"):
            if key not in g:
                raise ConfigError(f"grid.{key}", "missing")
        if len(g["box"]) != g["n"]:
            raise ConfigError("grid.box", f"needs {g['n']} intervals")
        if ("h" in g) == ("cells" in g):
            raise ConfigError("grid", "give exactly one of 'h' and 'cells'")
        if ("dt" in g) == ("steps" in g):
            raise ConfigError("grid", "give exactly one of 'dt' and 'steps'")
        if "seed" in r and not isinstance(r["seed"], int):
            raise ConfigError("seed", "must be an integer")
        for name, v in r.get("tolerances", {}).items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerances.{name}", "must be positive")
        for path, ref in _file_refs(r):
            if not self.resolve(ref).exists():
                raise ConfigError(path, f"referenced file {ref!r} does not exist")
        sweep = r.get("sweep")
        if sweep is not None:
            if "path" not in sweep or not isinstance(sweep.get("values"), list) or not sweep["values"]:
                raise ConfigError("sweep", "needs 'path' and a non-empty 'values' list")
            try:
                _get_path(r, sweep["path"])
            except KeyError:
                raise ConfigError("sweep.path", f"{sweep['path']!r} does not exist in the config") from None

    def expand(self) -> list[tuple["ExperimentConfig", dict | None]]:
        """One config per sweep value (or just this one)."""
        sweep = self.raw.get("sweep")
        if not sweep:
            return [(self, None)]
        out = []
        for v in sweep["values"]:
            raw = copy.deepcopy(self.raw)
            raw.pop("sweep")
            _set_path(raw, sweep["path"], v)
            out.append((ExperimentConfig(raw, self.base_dir), {"path": sweep["path"], "value": v}))
        return out


def _file_refs(obj, path=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            sub = f"{path}.{k}" if path else k
            if k == "file" and isinstance(v, str):
                yield sub, v
            else:
                yield from _file_refs(v, sub)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _file_refs(v, f"{path}[{i}]")


def _get_path(obj, dotted: str):
    for part in dotted.split("."):
        obj = obj[part]
    return obj


def _set_path(obj, dotted: str, value) -> None:
    parts = dotted.split(".")
    for part in parts[:-1]:
        obj = obj[part]
    obj[parts[-1]] = value


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

_RECORD_KEYS = ("schema", "action", "inputs_hash", "config_hash", "grid_hash", "passed", "payload", "wall_time", "artifacts")


@dataclass
class ReportRecord:
    action: str
    inputs_hash: str
    config_hash: str
    grid_hash: str
    passed: bool
    payload: dict
    wall_time: float = 0.0
    artifacts: list = field(default_factory=list)

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in _RECORD_KEYS if k != "schema"}
        d["schema"] = SCHEMA_VERSION
        return canonical_json(d)

    @classmethod
    def from_json(cls, line: str) -> "ReportRecord":
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReportSchemaError(f"not JSON: {exc.msg}") from None
        missing = [k for k in _RECORD_KEYS if k not in d]
        if missing:
            raise ReportSchemaError(f"record lacks {missing}")
        if d["schema"] != SCHEMA_VERSION:
            raise ReportSchemaError(f"unsupported record schema {d['schema']}")
        if not isinstance(d["payload"], dict) or not isinstance(d["payload"].get("constants", {}), dict):
            raise ReportSchemaError("payload must be an object with a 'constants' object")
        if d["action"] != "trend" and not _action_ok(d["action"]):
            raise ReportSchemaError(f"unknown action {d['action']!r}")
        d.pop("schema")
        return cls(**d)


def write_reports(records, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / REPORT_FILE
    with path.open("a") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    return path


def read_reports(path) -> list[ReportRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ReportSchemaError(f"cannot read {path}: {exc.strerror}") from None
    recs = []
    for i, line in enumerate(lines, 1):
        if line.strip():
            try:
                recs.append(ReportRecord.from_json(line))
            except ReportSchemaError as exc:
                raise ReportSchemaError(f"{path}:{i}: {exc}") from None
    return recs


# ---------------------------------------------------------------------------
# Building problems from the config
# ---------------------------------------------------------------------------


def build_grid(desc: dict) -> SpaceTimeGrid:
    box = [tuple(map(float, b)) for b in desc["box"]]
    h = float(desc["h"]) if "h" in desc else (box[0][1] - box[0][0]) / int(desc["cells"][0])
    T = float(desc["T"])
    dt = float(desc["dt"]) if "dt" in desc else T / int(desc["steps"])
    return make_grid(int(desc["n"]), box, h, T, dt)


def _data_fn(spec, grid: SpaceTimeGrid, cfg: ExperimentConfig, path: str) -> Callable[[np.ndarray], np.ndarray]:
    """Point evaluator ``x (m, n) -> (m,)`` for initial or boundary data."""
    if isinstance(spec, (int, float)):
        return lambda x: np.full(len(x), float(spec))
    if not isinstance(spec, dict):
        raise ConfigError(path, "must be a number or an object")
    if "file" in spec:
        ff = read_field(cfg.resolve(spec["file"]))
        if ff.values.shape[1:] != grid.shape:
            raise ConfigError(path, "field file does not match the grid")
        vals = ff.values[0].ravel()
        return lambda x: vals[np.ravel_multi_index(tuple(np.array([grid.nearest_cell(p) for p in x]).T), grid.shape)]
    kind = spec.get("type")
    lo, hi = np.array([b[0] for b in grid.box]), np.array([b[1] for b in grid.box])
    if kind == "zero":
        return lambda x: np.zeros(len(x))
    if kind == "constant":
        v = float(spec.get("value", 1.0))
        return lambda x: np.full(len(x), v)
    if kind == "coordinate":
        ax, s = int(spec.get("axis", 0)), float(spec.get("scale", 1.0))
        return lambda x: s * x[:, ax]
    if kind == "sine":
        mode = int(spec.get("mode", 1))
        return lambda x: np.prod(np.sin(mode * math.pi * (x - lo) / (hi - lo)), axis=-1)
    if kind == "gaussian":
        c = np.asarray(spec.get("center", [0.0] * grid.n), dtype=float)
        w = float(spec.get("width", 1.0))
        return lambda x: np.exp(-np.sum((x - c) ** 2, axis=-1) / w**2)
    raise ConfigError(f"{path}.type", f"unknown data type {kind!r}")


def _cell_values(fn, grid: SpaceTimeGrid) -> np.ndarray:
    return fn(grid.center_points().reshape(-1, grid.n)).reshape(grid.shape)


def build_coefficient(spec, grid: SpaceTimeGrid, cfg: ExperimentConfig) -> CoefficientField:
    if isinstance(spec, (int, float)):
        return constant_field(grid, float(spec), "a")
    if isinstance(spec, dict) and "file" in spec:
        ff = read_field(cfg.resolve(spec["file"]))
        vals = ff.values[0] if ff.values.shape[0] == 1 else ff.values
        if vals.shape not in (grid.shape, grid.field_shape):
            raise ConfigError("problem.coefficient.file", "field file does not match the grid")
        return CoefficientField(grid, vals, "a")
    try:
        return named_field(grid, spec, "a")
    except (KeyError, TypeError) as exc:
        raise ConfigError("problem.coefficient", str(exc)) from None


def build_linear(cfg: ExperimentConfig, grid: SpaceTimeGrid) -> LinearCoefficients:
    a = build_coefficient(cfg.problem.get("coefficient", 1.0), grid, cfg)
    return LinearCoefficients.isotropic(a)


def build_structure(cfg: ExperimentConfig, grid: SpaceTimeGrid, lc: LinearCoefficients | None = None) -> StructureFunctions:
    spec = cfg.problem.get("structure", {"family": "linear"})
    fam = spec.get("family", "linear")
    if fam == "linear":
        return linear_structure(lc or build_linear(cfg, grid), float(spec.get("eps", 0.1)))
    if fam == "bounded_nonlinear":
        return bounded_nonlinear_structure(float(spec.get("c", 0.0)), float(spec.get("p_cap", 10.0)))
    raise ConfigError("problem.structure.family", f"unknown structure family {fam!r}")


def build_boundary(cfg: ExperimentConfig, grid: SpaceTimeGrid, default: str = "dirichlet") -> Boundary:
    spec = cfg.problem.get("boundary", {"kind": default})
    kind = spec.get("kind", default)
    if kind == "dirichlet":
        fn = _data_fn(spec.get("value", 0.0), grid, cfg, "problem.boundary.value")
        return Boundary("dirichlet", lambda x, t: fn(np.atleast_2d(x)))
    if kind == "farfield":
        return Boundary("farfield", center=tuple(spec.get("center", [0.0] * grid.n)))
    if kind == "no_flux":
        return Boundary("no_flux")
    raise ConfigError("problem.boundary.kind", f"unknown boundary kind {kind!r}")


def build_solver_config(cfg: ExperimentConfig) -> SolverConfig:
    s = cfg.problem.get("scheme", {})
    return SolverConfig(time_scheme_weight=float(s.get("weight", 1.0)), linear_solver=s.get("linear_solver", "direct"))


def build_problem(cfg: ExperimentConfig, grid: SpaceTimeGrid) -> ProblemSpec:
    kind = cfg.problem.get("kind", "linear_homogeneous")
    init = _cell_values(_data_fn(cfg.problem.get("initial", {"type": "zero"}), grid, cfg, "problem.initial"), grid)
    bc = build_boundary(cfg, grid)
    if kind == "quasilinear":
        co = build_structure(cfg, grid)
    elif kind in ("linear_homogeneous", "linear_full"):
        co = build_linear(cfg, grid)
    else:
        raise ConfigError("problem.kind", f"unknown problem kind {kind!r}")
    return ProblemSpec(kind, co, init, grid, bc)


def _bounds(spec: ProblemSpec) -> StructureBounds:
    co = spec.coefficients
    if isinstance(co, LinearCoefficients):
        A = co.A.reshape(-1, spec.grid.n, spec.grid.n)
        return StructureBounds.from_fields(spec.grid, co.nu, float(np.max(np.linalg.norm(A, ord=2, axis=(1, 2)))))
    return StructureBounds.from_fields(spec.grid, co.a, co.a_bar)


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


class _Ctx:
    """Per-record state: config, grid, output directory and artifact list."""

    def __init__(self, cfg: ExperimentConfig, out: Path, tag: str):
        self.cfg = cfg
        self.out = out
        self.tag = tag
        self.grid = build_grid(cfg.raw["grid"])
        self.params = _Params(cfg.params)
        self.tol = cfg.tolerances
        self.artifacts: list[str] = []

    def _name(self, name: str) -> Path:
        return self.out / f"{self.tag}-{name}"

    def field(self, name: str, values, first_step: int = 0, meta: dict | None = None) -> None:
        p = write_field(self._name(name + ".json"), values, self.grid, name, first_step, meta)
        self.artifacts += [p.name, p.with_suffix(".bin").name]

    def columns(self, name: str, cols, header: str) -> None:
        p = write_columns(self._name(name + ".dat"), cols, header)
        self.artifacts.append(p.name)

    def lc(self) -> LinearCoefficients:
        return build_linear(self.cfg, self.grid)

    def source(self) -> tuple:
        xi = tuple(float(v) for v in np.atleast_1d(self.params.get("source", [0.0] * self.grid.n)))
        try:
            self.grid.cell_of_center(xi)
        except GridError as exc:
            raise ConfigError("params.source", str(exc)) from None
        return xi


def _constants(d: dict) -> dict:
    """Numeric scalars only, flattened one level."""
    out = {}
    for k, v in d.items():
        if isinstance(v, (bool, np.bool_)):
            continue
        if isinstance(v, (int, float, np.integer, np.floating)):
            out[k] = float(v)
    return out


def _solve(ctx: _Ctx) -> tuple[ProblemSpec, SolutionField]:
    spec = build_problem(ctx.cfg, ctx.grid)
    u = solve(spec, build_solver_config(ctx.cfg))
    u.metadata["config_hash"] = ctx.cfg.hash
    return spec, u


def _profile(ctx: _Ctx, u: SolutionField, step: int, name: str) -> None:
    pts = ctx.grid.center_points().reshape(-1, ctx.grid.n)
    ctx.columns(name, [*pts.T, u.at_step(step).ravel()], " ".join([f"x{i}" for i in range(ctx.grid.n)] + ["u"]))


def act_solve(ctx: _Ctx):
    spec, u = _solve(ctx)
    bumps = random_bumps(ctx.grid, int(ctx.params.get("n_bumps", 10)), ctx.cfg.seed)
    resid = weak_residual(u, spec, bumps)
    mass = mass_balance(u)
    const = {
        "max_weak_residual": float(np.max(resid)),
        "u_max": float(np.max(u.values)),
        "u_min": float(np.min(u.values)),
        "mass_drift": float(np.max(np.abs(mass - mass[0]))),
    }
    ctx.field("solution", u.values, u.first_step, {"problem_hash": spec.hash})
    _profile(ctx, u, u.steps[-1], "profile")
    ctx.columns("mass", [u.times, mass], "t mass")
    return const["max_weak_residual"] <= ctx.tol["weak_residual"], {"constants": const, "weak_residuals": resid}


def _kernel(ctx: _Ctx) -> K.KernelEstimate:
    p = ctx.params
    tail_tol = p.get("tail_tol", 1e-8)
    return K.estimate_kernel(
        ctx.lc(), ctx.grid, ctx.source(), float(p.get("tau", 0.0)), tail_tol=tail_tol, horizon=p.get("horizon")
    )


def act_kernel(ctx: _Ctx):
    k = _kernel(ctx)
    mass = k.mass()
    m2 = k.second_moment()
    const = {
        "max_mass_error": float(np.max(np.abs(mass - 1))),
        "final_second_moment": float(m2[-1]),
        "flagged_steps": float(np.count_nonzero(k.flagged)),
    }
    ctx.field("kernel", k.values, k.first_step, {"source": list(k.source), "tau": k.tau})
    ctx.columns("moments", [k.elapsed, mass, m2], "t_minus_tau mass second_moment")
    return const["max_mass_error"] <= ctx.tol["mass"], {"constants": const}


def act_gaussian_fit(ctx: _Ctx):
    k = _kernel(ctx)
    p = ctx.params
    kw = {key: p[key] for key in ("radius", "min_steps", "min_time", "alpha_ref") if key in p}
    fit = K.fit_gaussian_bounds(k, **kw)
    d = fit.as_dict()
    passed = math.isfinite(fit.C_fit) and fit.C_fit <= ctx.tol.get("C_fit", math.inf)
    return passed, {"constants": _constants(d)}


def act_ck(ctx: _Ctx):
    p = ctx.params
    r = K.check_chapman_kolmogorov(
        ctx.lc(),
        ctx.grid,
        ctx.source(),
        float(p.get("tau", 0.0)),
        float(p["eta"]),
        float(p["t"]),
        float(p.get("probe_radius", 3.0)),
        Boundary("no_flux"),
    )
    return r <= ctx.tol["ck"], {"constants": {"residual": r}}


def act_green(ctx: _Ctx):
    p = ctx.params
    upper = tuple(p["upper"]) if "upper" in p else None
    g = K.elliptic_green(ctx.lc(), ctx.grid, ctx.source(), p.get("T_max"), upper=upper)
    d = g.as_dict()
    lo, hi = d.pop("annulus")
    const = {**_constants(d), "annulus_lo": lo, "annulus_hi": hi}
    r, vals = g.radial()
    ctx.columns("radial", [r.ravel(), vals.ravel()], "r G")
    passed = g.K_fit <= ctx.tol.get("K", math.inf) and g.max_rel_error <= ctx.tol.get("green_rel", math.inf)
    return passed, {"constants": const}


def _solution(ctx: _Ctx) -> tuple[ProblemSpec | None, SolutionField]:
    src = ctx.params.get("solution", "solve")
    if src == "solve":
        return _solve(ctx)
    if src == "kernel":
        k = _kernel(ctx)
        return None, k.as_solution()
    raise ConfigError("params.solution", f"must be 'solve' or 'kernel', got {src!r}")


class _Params(dict):
    """Action parameters; a missing key is a config error with its path."""

    def __missing__(self, key):
        raise ConfigError(f"params.{key}", "missing")


def _center(p: dict, key: str = "center") -> tuple:
    c = p[key]
    if not isinstance(c, dict) or "x" not in c or "t" not in c:
        raise ConfigError(f"params.{key}", "needs 'x' and 't'")
    return (tuple(float(v) for v in np.atleast_1d(c["x"])), float(c["t"]))


def act_certify(ctx: _Ctx, theorem: str):
    p = ctx.params
    spec, u = _solution(ctx)
    bounds = _bounds(spec) if spec is not None else None
    if theorem in ("max_principle", "min_principle"):
        if bounds is None:
            raise ConfigError("params.solution", "the maximum principle needs a solved problem")
        gamma = parabolic_boundary(u.grid).mask
        full = u.full()
        stored = np.zeros(u.grid.field_shape, dtype=bool)
        stored[u.steps] = True
        vals = full[gamma & stored]
        mode = "max" if theorem == "max_principle" else "min"
        M = float(p.get("M", vals.max() if mode == "max" else vals.min()))
        certs = [C.certify_max_principle(u, M, bounds, mode, tol=ctx.tol.get("max_principle", 1e-8))]
    elif theorem == "local_bound":
        certs = [C.certify_local_bound(u, _center(p), float(p["rho"]), bounds)]
    elif theorem == "harnack":
        certs = [C.certify_harnack(u, _center(p), float(p["rho"]), bounds)]
    elif theorem == "pointwise_harnack":
        pairs = C.lattice_pairs(np.asarray(p["points"], dtype=float), p["times"])
        certs = [C.certify_pointwise_harnack(u, pairs, float(p.get("k", 0.0)))]
    elif theorem == "hoelder":
        certs = [C.estimate_hoelder(u, _center(p), [float(r) for r in p["radii"]])]
    elif theorem == "limit_behavior":
        center = p.get("center_x")
        certs = [C.certify_limit_behavior(u, float(p.get("alpha", 1.0)), center=center)]
    elif theorem == "caccioppoli":
        if spec is None:
            raise ConfigError("params.solution", "the energy inequality needs a solved problem")
        sf = spec.coefficients if isinstance(spec.coefficients, StructureFunctions) else build_structure(ctx.cfg, ctx.grid, spec.coefficients)
        cut = p["cutoff"]
        eta = C.Cutoff(tuple(cut["center"]), tuple(cut["radii"]), float(cut["t_on"]), float(cut["t_ramp"]))
        n_tau = int(p.get("n_tau", 20))
        dt = ctx.grid.dt
        lo = cut["t_on"] + cut["t_ramp"]
        taus = sorted({round(t / dt) * dt for t in np.linspace(lo, ctx.grid.T, n_tau)})
        certs = [
            C.check_caccioppoli(u, eta, float(b), float(p.get("kappa", 0.1)), sf, taus, reading=p.get("reading", "homogeneous"))
            for b in p.get("betas", [1.0])
        ]
    else:  # pragma: no cover - guarded by validation
        raise ConfigError("action", theorem)
    payload = {"certificates": [c.as_dict() for c in certs]}
    const = {}
    for i, c in enumerate(certs):
        suffix = "" if len(certs) == 1 else f"_{i}"
        const.update({k + suffix: v for k, v in _constants(c.constants).items()})
    payload["constants"] = const
    if theorem == "hoelder":
        det = certs[0].details
        if "radii" in det and "osc" in det:
            ctx.columns("osc", [det["radii"], det["osc"]], "r osc")
    if theorem == "limit_behavior":
        det = certs[0].details
        if "t" in det and "mass" in det:
            ctx.columns("ball_mass", [det["t"], det["mass"]], "t mass")
    passed = all(c.passed for c in certs) and all(c.applicable for c in certs)
    return passed, payload


def _measure(ctx: _Ctx) -> W.BorelMeasure:
    spec = ctx.params.get("measure")
    if spec is None:
        raise ConfigError("params.measure", "missing")
    atoms = [(a[0], a[1]) for a in spec.get("atoms", [])]
    dens = None
    if "density" in spec:
        dens = _cell_values(_data_fn(spec["density"], ctx.grid, ctx.cfg, "params.measure.density"), ctx.grid)
    try:
        return W.BorelMeasure(tuple(atoms), dens, ctx.grid if dens is not None else None, spec.get("growth"))
    except ValueError as exc:
        raise ConfigError("params.measure", str(exc)) from None


def _psis(ctx: _Ctx) -> list[W.TraceTestFunction]:
    spec = ctx.params.get("psi", {"type": "hats", "spacing_cells": 4})
    if spec["type"] == "hats":
        return W.hat_partition(ctx.grid, int(spec.get("spacing_cells", 4)) * ctx.grid.h)
    if spec["type"] == "gaussians":
        return [W.gaussian_test(c, float(spec.get("width", 0.5))) for c in spec["centers"]]
    raise ConfigError("params.psi.type", f"unknown test family {spec['type']!r}")


def act_widder(ctx: _Ctx, op: str):
    m = _measure(ctx)
    if op == "growth":
        g = W.check_growth(m)
        return g.ok, {"constants": {"sigma": g.sigma}, "reason": g.reason}
    psis = _psis(ctx)
    lc = ctx.lc()
    if op == "trace":
        pts = ctx.grid.center_points().reshape(-1, ctx.grid.n)
        fam = K.estimate_kernel_family(lc, ctx.grid, pts, 0.0)
        u = W.represent(fam, m)
        traces = W.initial_trace(u, psis)
        vals = np.array([t.value for t in traces])
        errs = np.array([t.error for t in traces])
        ctx.columns("traces", [np.arange(len(vals)), vals, errs], "index trace error")
        return True, {"constants": {"total_trace": float(vals.sum()), "max_error": float(errs.max())}}
    cert = W.trace_roundtrip(m, lc, ctx.grid, psis, rel_tol=ctx.tol["trace_rel"], seed=ctx.cfg.seed)
    payload = {"certificates": [cert.as_dict()], "constants": _constants(cert.constants)}
    det = cert.details
    ctx.columns("traces", [np.arange(len(det["traces"])), det["traces"], det["expected"]], "index trace expected")
    passed = cert.passed
    if m.atoms and all(p.center is not None for p in psis) and ctx.params.get("psi", {}).get("type", "hats") == "hats":
        tv = [W.TraceValue(p.name, float(v), 0.0, (), ()) for p, v in zip(psis, det["traces"])]
        found = W.recover_atoms(tv, psis)
        want = sorted(((W._snap(ctx.grid, loc), mass) for loc, mass in m.atoms), key=lambda a: tuple(a[0]))
        ok = len(found) == len(want)
        loc_err = mass_err = math.inf
        if ok:
            loc_err = max(float(np.max(np.abs(f[0] - w[0]))) for f, w in zip(found, want))
            mass_err = max(abs(f[1] - w[1]) / w[1] for f, w in zip(found, want))
            ok = loc_err <= ctx.grid.h and mass_err <= ctx.tol["atom_mass_rel"]
        payload["recovered_atoms"] = [[list(f[0]), f[1]] for f in found]
        payload["constants"].update({"atom_location_error": loc_err, "atom_mass_rel_error": mass_err})
        passed = passed and ok
    return passed, payload


def act_validate_structure(ctx: _Ctx):
    p = ctx.params
    rows, ok = [], True
    pairs = {}
    for name, e in p.get("exponents", {}).items():
        pair = ExponentPair(float(e["p"]), float(e["q"]), e.get("kind", "first_order" if name in "bef" else "zero_order"))
        chk = check_exponent_pair(pair, ctx.grid.n)
        rows.append({"coefficient": name, "p": pair.p, "q": pair.q, "ok": chk.ok, "margin": chk.margin, "reason": chk.reason})
        ok = ok and chk.ok
        pairs[name] = pair
    const = {}
    if ok and pairs:
        const["theta"] = compute_theta(pairs, ctx.grid.n)
    sf = build_structure(ctx.cfg, ctx.grid)
    rep = verify_structure(sf, random_samples(ctx.grid, int(p.get("samples", 2000)), ctx.cfg.seed))
    const.update({f"slack_{k}": v for k, v in rep.worst_slack.items()})
    failures = [f"coefficient {r['coefficient']}: {r['reason']}" for r in rows if not r["ok"]]
    if not rep.ok:
        failures += [f"{k}: {int(v.size)} violating samples" for k, v in rep.violations.items() if v.size]
    return ok and rep.ok, {"constants": const, "exponents": rows, "structure": rep.summary(), "failures": failures}


def _dispatch(ctx: _Ctx):
    a = ctx.cfg.action
    table = {
        "solve": act_solve,
        "kernel": act_kernel,
        "gaussian-fit": act_gaussian_fit,
        "ck-check": act_ck,
        "green": act_green,
        "validate-structure": act_validate_structure,
    }
    if a in table:
        return table[a](ctx)
    head, _, tail = a.partition(".")
    if head == "certify":
        return act_certify(ctx, tail)
    return act_widder(ctx, tail)


def _problem_key(cfg: ExperimentConfig) -> dict:
    """What identifies a problem up to resolution: the grid's extent but not its spacing."""
    raw = {k: v for k, v in cfg.raw.items() if k not in ("output", "sweep", "tolerances")}
    g = dict(raw["grid"])
    for key in ("h", "cells", "dt", "steps"):
        g.pop(key, None)
    raw["grid"] = g
    return raw


def _run_one(cfg: ExperimentConfig, out: Path, sweep: dict | None, reproducible: bool) -> ReportRecord:
    inputs_hash = _hash(_problem_key(cfg))
    tag = f"{cfg.action.replace('.', '-')}-{inputs_hash[:8]}"
    t0 = time.perf_counter()
    try:
        ctx = _Ctx(cfg, out, tag)
        passed, payload = _dispatch(ctx)
    except (ConfigError, RunError):
        raise
    except Exception as exc:  # downstream failure: name the originating module
        mod = type(exc).__module__.rsplit(".", 1)[-1]
        raise RunError(mod, f"{type(exc).__name__}: {exc}") from exc
    wall = 0.0 if reproducible else time.perf_counter() - t0
    if sweep is not None:
        payload["sweep"] = sweep
    payload = to_jsonable(payload)
    return ReportRecord(cfg.action, inputs_hash, cfg.hash, ctx.grid.hash, bool(passed), payload, wall, ctx.artifacts)


def _trend(records: list[ReportRecord], sweep: dict, cfg: ExperimentConfig) -> ReportRecord:
    names = sorted(set.intersection(*(set(r.payload["constants"]) for r in records)))
    series = {n: [r.payload["constants"][n] for r in records] for n in names}
    payload = {"path": sweep["path"], "values": sweep["values"], "series": series, "constants": {}}
    return ReportRecord("trend", _hash([r.inputs_hash for r in records]), cfg.hash, records[0].grid_hash, all(r.passed for r in records), to_jsonable(payload), 0.0, [])


def run(cfg: ExperimentConfig, out_dir, workers: int = 1, reproducible: bool = False) -> list[ReportRecord]:
    """Execute the config's action (once per sweep value) and write artifacts to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = cfg.expand()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_run_one, c, out, s, reproducible) for c, s in jobs]
            records = [f.result() for f in futs]
    else:
        records = [_run_one(c, out, s, reproducible) for c, s in jobs]
    if cfg.raw.get("sweep"):
        records.append(_trend(records, cfg.raw["sweep"], cfg))
    return records


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _load_baseline(path: Path) -> dict:
    if not path.exists():
        return {"schema": SCHEMA_VERSION, "entries": {}}
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ReportSchemaError(f"{path}: not JSON ({exc.msg})") from None
    if data.get("schema") != SCHEMA_VERSION or not isinstance(data.get("entries"), dict):
        raise ReportSchemaError(f"{path}: not a version-{SCHEMA_VERSION} baseline file")
    return data


def record_baseline(records, baseline_file, rel_tol: float | None = None) -> Path:
    """Store each record's constants under its inputs hash (overwriting older entries)."""
    path = Path(baseline_file)
    data = _load_baseline(path)
    for rec in records:
        if rec.action == "trend":
            continue
        data["entries"][rec.inputs_hash] = {
            "action": rec.action,
            "constants": rec.payload["constants"],
            "rel_tol": rel_tol if rel_tol is not None else DEFAULT_TOLERANCES["baseline_rel"],
            "grid_hash": rec.grid_hash,
        }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(data), sort_keys=True, indent=1) + "\n")
    return path


@dataclass
class BaselineDiff:
    passed: bool
    rows: list

    def lines(self) -> list[str]:
        return [
            f"{r['inputs_hash']} {r['action']} {r['constant']}: {r['current']} vs {r['baseline']} "
            f"rel={r['rel_diff']:.3g} tol={r['tol']:.3g} {'ok' if r['ok'] else 'FAIL'}"
            for r in self.rows
        ]


def _num(v) -> float:
    return float(v)  # non-finite values are stored as "inf" / "nan", which float() parses


def compare_baseline(records, baseline_file, rel_tol: float | None = None) -> BaselineDiff:
    """Per-constant relative differences against the stored baseline."""
    path = Path(baseline_file)
    if not path.exists():
        raise FileNotFoundError(f"no baseline at {path}; record one with `roughheat baseline record --report <reports.jsonl> --baseline {path}`")
    data = _load_baseline(path)
    rows, ok_all = [], True
    for rec in records:
        if rec.action == "trend":
            continue
        entry = data["entries"].get(rec.inputs_hash)
        if entry is None:
            raise KeyError(
                f"no baseline for inputs {rec.inputs_hash} ({rec.action}); "
                f"record one with `roughheat baseline record --report <reports.jsonl> --baseline {path}`"
            )
        tol = rel_tol if rel_tol is not None else float(entry.get("rel_tol", DEFAULT_TOLERANCES["baseline_rel"]))
        for name, base in sorted(entry["constants"].items()):
            cur = rec.payload["constants"].get(name)
            if cur is None:
                rows.append({"inputs_hash": rec.inputs_hash, "action": rec.action, "constant": name, "current": None, "baseline": base, "rel_diff": math.inf, "tol": tol, "ok": False})
                ok_all = False
                continue
            b, c = _num(base), _num(cur)
            if b == c:
                rel = 0.0
            elif math.isfinite(b) and math.isfinite(c):
                rel = abs(c - b) / max(abs(b), 1e-300)
            else:
                rel = math.inf
            ok = rel <= tol
            ok_all = ok_all and ok
            rows.append({"inputs_hash": rec.inputs_hash, "action": rec.action, "constant": name, "current": cur, "baseline": base, "rel_diff": rel, "tol": tol, "ok": ok})
    return BaselineDiff(ok_all, rows)


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _out_dir(args, cfg: ExperimentConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg is not None and cfg.raw.get("output"):
        return cfg.resolve(cfg.raw["output"])
    return Path("roughheat-out")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps")
    common.add_argument("--reproducible", action="store_true", help="zero wall times so reruns are byte-identical")
    common.add_argument("--seed", type=int, help="override the config seed")

    ap = argparse.ArgumentParser(prog="roughheat", description="Rough-coefficient parabolic laboratory.", parents=[common])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ACTIONS:
        sub.add_parser(name, parents=[common], help=f"run the {name} action")
    c = sub.add_parser("certify", parents=[common], help="run a certifier")
    c.add_argument("theorem", choices=THEOREMS)
    w = sub.add_parser("widder", parents=[common], help="measure representation and traces")
    w.add_argument("op", choices=WIDDER_OPS)
    r = sub.add_parser("report", parents=[common], help="summarize a report file")
    r.add_argument("report", nargs="?", help="reports.jsonl or its directory (default: the output directory)")
    b = sub.add_parser("baseline", parents=[common], help="record or compare baselines")
    b.add_argument("op", choices=("record", "compare"))
    b.add_argument("--report", help="reports.jsonl (default: <out>/reports.jsonl)")
    b.add_argument("--baseline", help="baseline file (default: <out>/baseline.json)")
    b.add_argument("--rel-tol", type=float, help="relative tolerance per constant")
    return ap


def _print_records(records) -> None:
    for rec in records:
        status = "PASS" if rec.passed else "FAIL"
        consts = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(rec.payload.get("constants", {}).items())[:6])
        print(f"{status} {rec.action} [{rec.inputs_hash}] {consts}")
        for f in rec.payload.get("failures", []):
            print(f"  failure: {f}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command in ("report", "baseline"):
            cfg = ExperimentConfig.from_file(args.config) if args.config else None
            out = _out_dir(args, cfg)
            if args.command == "report":
                records = read_reports(args.report or out)
                _print_records(records)
                return EXIT_PASS if all(r.passed for r in records) else EXIT_CERT_FAIL
            records = read_reports(args.report or out)
            bfile = Path(args.baseline) if args.baseline else out / "baseline.json"
            if args.op == "record":
                print(f"baseline written to {record_baseline(records, bfile, args.rel_tol)}")
                return EXIT_PASS
            diff = compare_baseline(records, bfile, args.rel_tol)
            print("\n".join(diff.lines()))
            return EXIT_PASS if diff.passed else EXIT_CERT_FAIL
        if not args.config:
            raise ConfigError("--config", "required for this command")
        cfg = ExperimentConfig.from_file(args.config)
        action = args.command
        if args.command == "certify":
            action = f"certify.{args.theorem}"
        elif args.command == "widder":
            action = f"widder.{args.op}"
        cfg = cfg.with_overrides(action=action, seed=args.seed)
        out = _out_dir(args, cfg)
        records = run(cfg, out, args.workers, args.reproducible)
        write_reports(records, out)
        _print_records(records)
        return EXIT_PASS if all(r.passed for r in records) else EXIT_CERT_FAIL
    except (ConfigError, ReportSchemaError, FieldFormatError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FileNotFoundError, KeyError) as exc:
        print(f"error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RunError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
