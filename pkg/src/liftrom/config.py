"""Run configuration: YAML with a versioned schema, merged over defaults
and validated before any computation starts."""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .case import BASE_AIRFOILS, DEFAULT_MESH, PRESET_FREESTREAM, CaseSetup
from .cst import CstAirfoil
from .euler import Freestream

__all__ = [
    "ConfigError",
    "SCHEMA_VERSION",
    "default_config",
    "load_config",
    "validate_config",
    "case_from_config",
    "config_digest",
    "with_seed",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("liftrom").joinpath("configs/naca_default.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _merge(base: dict, over: dict, path=""):
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in ("mesh", "freestream", "solver"):
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def load_config(path=None) -> dict:
    cfg = default_config()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        user = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        if not isinstance(user, dict):
            raise ConfigError("config must be a mapping")
        if user.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {user.get('schema')!r} (expected {SCHEMA_VERSION})")
        _merge(cfg, user)
    validate_config(cfg)
    return cfg


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _pos(d, key, where, integer=False):
    v = d.get(key)
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    _need(ok and not isinstance(v, bool) and v > 0, f"{where}.{key} must be a positive {'integer' if integer else 'number'}")


def case_from_config(cfg: dict) -> CaseSetup:
    c = cfg["case"]
    af = c["airfoil"]
    if isinstance(af, str):
        _need(af in BASE_AIRFOILS, f"case.airfoil must be one of {sorted(BASE_AIRFOILS)} or a coefficient mapping")
        base = BASE_AIRFOILS[af]
    else:
        try:
            base = CstAirfoil(np.asarray(af["upper"], float), np.asarray(af["lower"], float), af.get("n1", 0.5), af.get("n2", 1.0))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"case.airfoil: {exc}") from None
    fs = c["freestream"]
    if isinstance(fs, str):
        _need(fs in PRESET_FREESTREAM, f"case.freestream must be one of {sorted(PRESET_FREESTREAM)} or a mapping")
        fs = PRESET_FREESTREAM[fs]
    else:
        try:
            fs = Freestream(**fs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"case.freestream: {exc}") from None
    mesh = dict(c["mesh"])
    _need(set(mesh) <= {"n_wrap", "n_radial", "far_radius", "stretch"}, "case.mesh has unknown keys")
    try:
        return CaseSetup(base, list(c["active"]), float(c["fraction"]), fs, {**DEFAULT_MESH, **mesh})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"case: {exc}") from None


def validate_config(cfg: dict) -> None:
    """Check every field against the preconditions of the modules it feeds."""
    _need(cfg.get("schema") == SCHEMA_VERSION, f"schema must be {SCHEMA_VERSION}")
    case = case_from_config(cfg)
    _need(0.0 <= case.fraction < 1.0, "case.fraction must lie in [0, 1)")
    m = case.mesh
    _need(isinstance(m["n_wrap"], int) and m["n_wrap"] >= 32 and m["n_wrap"] % 2 == 0, "case.mesh.n_wrap must be an even integer >= 32")
    _need(isinstance(m["n_radial"], int) and m["n_radial"] >= 8, "case.mesh.n_radial must be an integer >= 8")
    _need(m["far_radius"] >= 10, "case.mesh.far_radius must be >= 10 chords")
    _need(m["stretch"] >= 1.0, "case.mesh.stretch must be >= 1")
    b = cfg["build"]
    _pos(b, "samples", "build", integer=True)
    _need(isinstance(b["seed"], int), "build.seed must be an integer")
    _need(0.0 < b["energy_target"] <= 1.0, "build.energy_target must lie in (0, 1]")
    _need(b["weighting"] in ("volume", "none"), "build.weighting must be 'volume' or 'none'")
    _need(set(b["solver"]) <= {"cfl", "tol", "max_iters"}, "build.solver has unknown keys")
    r = cfg["rom"]
    for key in ("obj_tol", "con_tol"):
        _pos(r, key, "rom")
    _pos(r, "max_evals", "rom", integer=True)
    _pos(r, "starts", "rom", integer=True)
    _need(r["form"] in ("cross", "quotient"), "rom.form must be 'cross' or 'quotient'")
    v = cfg["validate"]
    _pos(v, "holdout", "validate", integer=True)
    for key in ("cp_max", "cp_mean", "cl"):
        _pos(v["thresholds"], key, "validate.thresholds")
    g = cfg["ga"]
    for key in ("population", "generations", "tournament"):
        _pos(g, key, "ga", integer=True)
    _need(0 <= g["elitism"] < g["population"], "ga.elitism must be smaller than ga.population")
    _need(g["tournament"] <= g["population"], "ga.tournament must not exceed ga.population")
    _need(0.0 <= g["mutation_rate"] <= 1.0, "ga.mutation_rate must lie in [0, 1]")
    for key in ("blend_alpha", "mutation_sigma", "con_tol", "obj_tol"):
        _pos(g, key, "ga")
    u = cfg["uq"]
    _pos(u, "samples", "uq", integer=True)
    _pos(u, "kde_points", "uq", integer=True)
    _need(isinstance(u["fom_control"], int) and u["fom_control"] >= 0, "uq.fom_control must be a non-negative integer")
    for key in ("bandwidth_cl", "bandwidth_cd"):
        _pos(u, key, "uq")


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def with_seed(cfg: dict, seed: int | None) -> dict:
    """Copy of ``cfg`` with every stochastic stage seeded from ``seed``."""
    out = copy.deepcopy(cfg)
    if seed is not None:
        out["build"]["seed"] = seed
        out["validate"]["seed"] = seed + 1
        out["ga"]["seed"] = seed + 2
        out["uq"]["seed"] = seed + 3
    return out
