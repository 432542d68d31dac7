"""
JSON run configuration: defaults, validation and construction of solver objects.

A configuration is one JSON object with the sections ``domain``, ``time``,
``model``, ``objective``, ``newton``, ``armijo``, ``quadrature``,
``initial_condition``, ``target``, ``control`` and ``output``. Missing
entries take the defaults below; unknown entries are rejected.
"""

import copy
import json
from dataclasses import dataclass, fields

from . import fem1d
from .adjoint import NORM_MODES, ObjectiveParams
from .errors import ConfigError, InvalidDomainError, ProfileError
from .optimizer import ArmijoParams
from .profiles import DEFAULT_INITIAL, DEWETTING_TARGET, ProfileSpec
from .state import ModelParams, NewtonParams, TimeGrid

__all__ = ["DEFAULTS", "resolve", "load", "build", "Setup"]

DEFAULTS = {
    "domain": {"a": 0.0, "b": 5.0, "n_space": 30},
    "time": {"t_final": 1.0, "n_time": 5000},
    "model": {"lambda": 1.0, "beta": 3.0, "eps": 0.1},
    "objective": {"alpha": 1e-7, "gamma": 0.0, "c0": 0.0, "norm_mode": "l2"},
    "newton": {"tol": 1e-10, "max_iter": 1000},
    "armijo": {"sigma_star": 1e-5, "rho": 0.15, "delta_tol": 5e-5, "max_outer": 50000,
               "max_backtracks": 60},
    "quadrature": {"points": 5, "split_kinks": False},
    "initial_condition": DEFAULT_INITIAL.to_dict(),
    "target": DEWETTING_TARGET.to_dict(),
    "control": {"kind": "constant", "offset": 0.0},
    "output": {"snapshot_times": None, "directory": None},
}

_REAL, _INT, _BOOL, _STR = "real", "integer", "boolean", "string"

_SCHEMA = {
    "domain": {"a": _REAL, "b": _REAL, "n_space": _INT},
    "time": {"t_final": _REAL, "n_time": _INT},
    "model": {"lambda": _REAL, "beta": _REAL, "eps": _REAL, "c0": _REAL},
    "objective": {"alpha": _REAL, "gamma": _REAL, "c0": _REAL, "norm_mode": _STR},
    "newton": {"tol": _REAL, "max_iter": _INT},
    "armijo": {"sigma_star": _REAL, "rho": _REAL, "delta_tol": _REAL, "max_outer": _INT,
               "max_backtracks": _INT},
    "quadrature": {"points": _INT, "split_kinks": _BOOL},
    "output": {"snapshot_times": "list", "directory": "path"},
}
_PROFILE_SECTIONS = ("initial_condition", "target", "control")
_PROFILE_KEYS = {f.name: (_STR if f.name in ("kind", "path", "time_dependence", "projection") else _REAL)
                 for f in fields(ProfileSpec)}
_NULLABLE = ("center", "path", "snapshot_times", "directory")


def _check_type(key, value, kind):
    if kind == _REAL:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if kind == _STR:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if kind == "path":
        if value is not None and not isinstance(value, str):
            raise ConfigError(key, f"expected a path string, got {value!r}")
        return value
    if value is None:
        return None
    if not isinstance(value, list) or not all(isinstance(t, (int, float)) and not isinstance(t, bool)
                                              for t in value):
        raise ConfigError(key, f"expected a list of times, got {value!r}")
    return [float(t) for t in value]


def resolve(raw):
    """Merge ``raw`` over the defaults and type-check every entry."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    cfg = copy.deepcopy(DEFAULTS)
    for section, entries in raw.items():
        if section not in cfg:
            raise ConfigError(section, "unknown section")
        if not isinstance(entries, dict):
            raise ConfigError(section, "section must be a JSON object")
        schema = _PROFILE_KEYS if section in _PROFILE_SECTIONS else _SCHEMA[section]
        if section in _PROFILE_SECTIONS and "kind" in entries:
            cfg[section] = {}   # a new profile kind does not inherit the default's parameters
        for key, value in entries.items():
            if key not in schema:
                raise ConfigError(f"{section}.{key}", "unknown key")
            if value is None and key not in _NULLABLE:
                raise ConfigError(f"{section}.{key}", "may not be null")
            cfg[section][key] = None if value is None else _check_type(f"{section}.{key}", value, schema[key])
    if "c0" in raw.get("model", {}) and "c0" not in raw.get("objective", {}):
        cfg["objective"]["c0"] = cfg["model"]["c0"]
    if cfg["output"]["snapshot_times"] is None:
        cfg["output"]["snapshot_times"] = [0.0, cfg["time"]["t_final"]]
    build(cfg)
    return cfg


def load(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<file>", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from None
    return resolve(raw)


@dataclass
class Setup:
    mesh: fem1d.Mesh1D
    grid: TimeGrid
    params: ModelParams
    obj: ObjectiveParams
    newton: NewtonParams
    armijo: ArmijoParams
    rule: fem1d.QuadratureRule
    initial: ProfileSpec
    target: ProfileSpec
    control: ProfileSpec


def _guard(key, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (ValueError, InvalidDomainError, ProfileError, TypeError) as exc:
        raise ConfigError(key, str(exc)) from None


def build(cfg):
    """Construct solver objects from a resolved configuration."""
    d, t, m, o = cfg["domain"], cfg["time"], cfg["model"], cfg["objective"]
    mesh = _guard("domain", fem1d.build_mesh, d["a"], d["b"], d["n_space"])
    grid = _guard("time", TimeGrid, t["t_final"], t["n_time"])
    params = _guard("model", ModelParams, m["lambda"], m["beta"], m["eps"], m.get("c0", o["c0"]))
    if o["norm_mode"] not in NORM_MODES:
        raise ConfigError("objective.norm_mode", f"must be one of {NORM_MODES}")
    obj = _guard("objective", ObjectiveParams, o["alpha"], o["gamma"], o["c0"], o["norm_mode"])
    newton = _guard("newton", NewtonParams, **cfg["newton"])
    armijo = _guard("armijo", ArmijoParams, **cfg["armijo"])
    q = cfg["quadrature"]
    if q["points"] < 1:
        raise ConfigError("quadrature.points", "must be >= 1")
    rule = fem1d.QuadratureRule.gauss(q["points"], q["split_kinks"])
    profiles = [_guard(name, ProfileSpec, **cfg[name]) for name in _PROFILE_SECTIONS]
    for ts in cfg["output"]["snapshot_times"]:
        if not 0.0 <= ts <= grid.t_final + 1e-12:
            raise ConfigError("output.snapshot_times", f"time {ts} outside [0, {grid.t_final}]")
    return Setup(mesh, grid, params, obj, newton, armijo, rule, *profiles)
