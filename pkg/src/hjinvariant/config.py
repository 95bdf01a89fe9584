"""Run-configuration files: strict JSON schema, validation, construction.

Configurations are JSON objects with optional sections ``model``, ``grid``,
``solve``, ``extract``, ``simulate``, ``verify``, and ``paths``.  Unknown keys
anywhere are rejected (a typo in a tolerance key silently corrupting a run is
worse than a hard error).  Each command checks that the sections it needs are
present; when both a model and a grid are given, the grid box must contain
the constraint sublevel set with a two-cell margin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    AffineDynamics,
    Box,
    GameModel,
    PolynomialMap,
    builtin_model,
    check_constraint_bound,
    normalize_constraint,
)
from .grid import Grid
from .setops import DEFAULT_EPSILON_SET
from .solver import SolveConfig, validate_grid_margin

__all__ = ["RunConfig", "ConfigError", "load_config", "dump_config"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


_SECTION_KEYS = {
    "model": {
        "name", "params", "state_dim", "control_box", "disturbance_box",
        "f1", "f2", "f3", "constraint",
    },
    "grid": {"lower", "upper", "counts"},
    "solve": {
        "gamma", "backend", "dt", "cfl", "tol", "max_iters", "hamiltonian_mode",
        "control_samples", "disturbance_samples", "safety_factor",
        "fd_dissipation", "foot_rule", "progress_every",
    },
    "extract": {"epsilon_set", "levels"},
    "simulate": {
        "x0", "t_final", "dt_sim", "seed",
        "control_policy", "control_value", "control_sequence",
        "disturbance_policy", "disturbance_value", "disturbance_sequence",
    },
    "verify": {"trials", "epsilon", "t_final", "dt_sim", "seed", "oracle_counts", "oracle_tol"},
    "paths": {"out_dir"},
}

_BOX_KEYS = {"lower", "upper"}
_CONSTRAINT_KEYS = {"builtin", "polynomial", "normalize", "bound"}


def _check_keys(obj: dict, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


@dataclass
class RunConfig:
    """Validated configuration; sections hold normalized plain dicts."""

    sections: dict

    def has(self, name: str) -> bool:
        return name in self.sections

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.sections]
        if missing:
            raise ConfigError(f"config is missing required section(s) {missing}")

    def section(self, name: str, default: dict | None = None) -> dict:
        if name in self.sections:
            return self.sections[name]
        if default is not None:
            return default
        raise ConfigError(f"config is missing section {name!r}")

    # -- builders ---------------------------------------------------------

    def build_model(self) -> GameModel:
        sec = self.section("model")
        if "name" in sec:
            extra = set(sec) - {"name", "params"}
            if extra:
                raise ConfigError(f"model: keys {sorted(extra)} not allowed with 'name'")
            try:
                return builtin_model(sec["name"], sec.get("params"))
            except ValueError as exc:
                raise ConfigError(f"model: {exc}") from exc
        for key in ("state_dim", "control_box", "disturbance_box", "f1", "f2", "f3", "constraint"):
            if key not in sec:
                raise ConfigError(f"model: explicit model requires key {key!r}")
        n = int(sec["state_dim"])
        ubox = _parse_box(sec["control_box"], "model.control_box")
        dbox = _parse_box(sec["disturbance_box"], "model.disturbance_box")
        f1 = _parse_poly(sec["f1"], n, n, "model.f1")
        f2 = _parse_poly(sec["f2"], n, n * ubox.dim, "model.f2")
        f3 = _parse_poly(sec["f3"], n, n * dbox.dim, "model.f3")
        dyn = AffineDynamics(f1, f2, f3, control_dim=ubox.dim, disturbance_dim=dbox.dim)
        constraint, bound = _parse_constraint(sec["constraint"], n)
        model = GameModel(
            state_dim=n, control_box=ubox, disturbance_box=dbox, dynamics=dyn,
            constraint=constraint, constraint_bound=bound, name="config",
        )
        return model

    def build_grid(self) -> Grid:
        sec = self.section("grid")
        for key in ("lower", "upper", "counts"):
            if key not in sec:
                raise ConfigError(f"grid: missing key {key!r}")
        try:
            return Grid(np.asarray(sec["lower"]), np.asarray(sec["upper"]), np.asarray(sec["counts"]))
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from exc

    def build_solve_config(self, **overrides) -> SolveConfig:
        sec = dict(self.section("solve", default={}))
        sec.update({k: v for k, v in overrides.items() if v is not None})
        sec.setdefault("margin_epsilon", self.epsilon_set())
        try:
            return SolveConfig(**sec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"solve: {exc}") from exc

    def epsilon_set(self) -> float:
        sec = self.section("extract", default={})
        eps = float(sec.get("epsilon_set", DEFAULT_EPSILON_SET))
        if eps < 0:
            raise ConfigError("extract.epsilon_set must be nonnegative")
        return eps


def _parse_box(obj, where: str) -> Box:
    _check_keys(obj, _BOX_KEYS, where)
    if "lower" not in obj or "upper" not in obj:
        raise ConfigError(f"{where}: requires 'lower' and 'upper'")
    try:
        return Box(np.asarray(obj["lower"], dtype=float), np.asarray(obj["upper"], dtype=float))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_poly(tables, n: int, r: int, where: str) -> PolynomialMap:
    if not isinstance(tables, list) or len(tables) != r:
        raise ConfigError(f"{where}: expected a list of {r} term tables")
    terms = []
    for o, table in enumerate(tables):
        row = []
        if not isinstance(table, list):
            raise ConfigError(f"{where}[{o}]: expected a list of [coeff, exponents] terms")
        for t, term in enumerate(table):
            if not (isinstance(term, list) and len(term) == 2):
                raise ConfigError(f"{where}[{o}][{t}]: term must be [coeff, exponents]")
            row.append((float(term[0]), tuple(int(e) for e in term[1])))
        terms.append(tuple(row))
    try:
        return PolynomialMap(n, r, tuple(terms))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _parse_constraint(obj, n: int):
    _check_keys(obj, _CONSTRAINT_KEYS, "model.constraint")
    if obj.get("builtin"):
        raise ConfigError("model.constraint: 'builtin' is only meaningful with a named model")
    if "polynomial" not in obj:
        raise ConfigError("model.constraint: requires 'polynomial' term table")
    poly = _parse_poly([obj["polynomial"]], n, 1, "model.constraint.polynomial")

    def raw(x):
        return poly(np.asarray(x, dtype=np.float64))[..., 0]

    if obj.get("normalize", True):
        return normalize_constraint(raw), 0.5
    if "bound" not in obj:
        raise ConfigError("model.constraint: unnormalized constraint requires 'bound'")
    return raw, float(obj["bound"])


def load_config(path) -> RunConfig:
    """Parse and validate a configuration file.

    Raises :class:`ConfigError` with a line/key diagnostic on JSON syntax
    errors, unknown keys, or inconsistent contents.  When both ``model`` and
    ``grid`` sections are present the constraint-bound declaration and the
    two-cell grid margin are verified by dense sampling.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(raw, set(_SECTION_KEYS), path if isinstance(path, str) else "config")
    for name, section in raw.items():
        _check_keys(section, _SECTION_KEYS[name], name)
    rc = RunConfig(sections=raw)

    if rc.has("model") and rc.has("grid"):
        model = rc.build_model()
        grid = rc.build_grid()
        try:
            check_constraint_bound(model, grid.lower, grid.upper)
            validate_grid_margin(model, grid, rc.epsilon_set())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return rc


def dump_config(rc: RunConfig, path) -> None:
    """Serialize a configuration; load(dump(rc)) reproduces rc exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rc.sections, fh, indent=2, sort_keys=True)
        fh.write("\n")
