"""Scenario configuration: TOML loading, validation, unit conversion and overrides.

Frequencies are entered as MHz: ``units = "f"`` means the value is
omega/2pi in MHz, ``units = "omega"`` means omega in rad/us.  Any frequency
key in ``[params]`` may instead carry a ``_gk`` suffix to give it in units of
G_k.  Temperatures are in mK.  Internally everything is rad/s, s and K.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

SCENARIOS = ("enhancement", "rabi", "entanglement", "blockade-sweep", "blockade-temperature", "custom")
UNITS = {"f": 2 * math.pi * 1e6, "omega": 1e6}

FREQ_PARAMS = ("omega_q", "omega_s_l", "omega_s_r", "detuning", "probe", "kappa_l", "kappa_r",
               "gamma_q", "omega_abs_l", "omega_abs_r")
PARAM_KEYS = {"G_k": float, "xi": float, "temperature": float, "coupling": str,
              "optimal_unknown": str, **{k: float for k in FREQ_PARAMS},
              **{f"{k}_gk": float for k in FREQ_PARAMS}}
PHYSICAL_KEYS = ("omega_l", "omega_r", "kerr_l", "kerr_r", "g_l", "g_r", "nu_l", "nu_r", "drive_l",
                 "drive_r", "omega_g", "omega_e", "omega_f", "kappa_l", "kappa_r", "gamma_q",
                 "temperature")
SPACE_KEYS = ("fock_l", "fock_r")
TIME_KEYS = ("start", "stop", "points", "unit")
AXIS_KEYS = ("name", "start", "stop", "points", "scale")
SOLVER_DEFAULTS = {"method": "auto", "rtol": 1e-8, "atol": 1e-10, "steady_method": "null-space",
                   "leakage_threshold": 1e-4, "leakage_hard_limit": 1e-2, "budget": 100_000,
                   "weights_epsilon": "auto"}
OPTION_DEFAULTS = {"delta_f_convention": "symmetric", "qubit_frequency": "exact", "branch": "lowest",
                   "model": "squeezed", "evolution": "schrodinger", "initial": [1, 0, 1]}
TOP_KEYS = ("scenario", "units", "output", "json", "params", "physical", "space", "time", "sweep",
            "solver", "options")

# loss rates quoted for the dissipative Rabi run, used whenever a blockade
# scenario leaves them unset (kappa/2pi = 100 kHz, gamma_q/2pi = 1 kHz)
DEFAULT_BLOCKADE_RATES_MHZ = {"kappa_l": 0.1, "kappa_r": 0.1, "gamma_q": 0.001}


@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    points: int
    scale: str = "linear"

    def values(self) -> list[float]:
        import numpy as np
        if self.points == 1:
            return [float(self.start)]
        if self.scale == "log":
            return [float(v) for v in np.geomspace(self.start, self.stop, self.points)]
        return [float(v) for v in np.linspace(self.start, self.stop, self.points)]


@dataclass
class ScenarioConfig:
    scenario: str
    units: str = "f"
    params: dict = field(default_factory=dict)
    physical: dict | None = None
    space: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)
    sweep: list[SweepAxis] = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: str | None = None
    json: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def unit_scale(self) -> float:
        return UNITS[self.units]

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canon.encode()).hexdigest()


def _typed(value, kind):
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


def _check_table(raw, allowed, where, problems):
    if not isinstance(raw, dict):
        problems.append(f"[{where}] must be a table")
        return {}
    for key in raw:
        if key not in allowed:
            problems.append(f"unknown key {where}.{key}")
    return raw


def parse_config(raw: dict) -> ScenarioConfig:
    """Validate a raw mapping; every problem is reported in one ConfigError."""
    raw = copy.deepcopy(raw)
    problems: list[str] = []
    for key in raw:
        if key not in TOP_KEYS:
            problems.append(f"unknown top-level key {key!r}")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        problems.append(f"scenario must be one of {', '.join(SCENARIOS)} (got {scenario!r})")
    units = raw.get("units", "f")
    if units not in UNITS:
        problems.append(f"units must be 'f' or 'omega' (got {units!r})")

    params = _check_table(raw.get("params", {}), PARAM_KEYS, "params", problems)
    for key, value in params.items():
        if key in PARAM_KEYS and not _typed(value, PARAM_KEYS[key]):
            problems.append(f"params.{key} must be {PARAM_KEYS[key].__name__}")
        base = key[:-3] if key.endswith("_gk") else None
        if base and base in params:
            problems.append(f"params.{base} and params.{key} are both set")
    for key in ("kappa_l", "kappa_r", "gamma_q", "probe", "temperature"):
        if _typed(params.get(key, 0.0), float) and params.get(key, 0.0) < 0:
            problems.append(f"params.{key} must be non-negative")
    if params.get("coupling", "exact") not in ("exact", "asymptote"):
        problems.append("params.coupling must be 'exact' or 'asymptote'")
    if params.get("optimal_unknown", "") not in ("", "omega_s_l", "omega_s_r", "omega_q"):
        problems.append("params.optimal_unknown must be omega_s_l, omega_s_r or omega_q")

    physical = raw.get("physical")
    if physical is not None:
        physical = _check_table(physical, PHYSICAL_KEYS, "physical", problems)
        for key in PHYSICAL_KEYS:
            if key in ("kappa_l", "kappa_r", "gamma_q", "temperature"):
                continue
            if key not in physical:
                problems.append(f"physical.{key} is required when [physical] is given")
        for key, value in physical.items():
            if key in PHYSICAL_KEYS and not _typed(value, float):
                problems.append(f"physical.{key} must be a number")

    space = _check_table(raw.get("space", {}), SPACE_KEYS, "space", problems)
    for key, value in space.items():
        if key in SPACE_KEYS and (not _typed(value, int) or value < 2):
            problems.append(f"space.{key} must be an integer >= 2")

    time = _check_table(raw.get("time", {}), TIME_KEYS, "time", problems)
    if time.get("unit", "gk") not in ("gk", "us"):
        problems.append("time.unit must be 'gk' or 'us'")
    if "points" in time and (not _typed(time["points"], int) or time["points"] < 2):
        problems.append("time.points must be an integer >= 2")
    for key in ("start", "stop"):
        if key in time and not _typed(time[key], float):
            problems.append(f"time.{key} must be a number")
    if _typed(time.get("start", 0.0), float) and _typed(time.get("stop", 1.0), float):
        if time.get("stop", 10.0) <= time.get("start", 0.0):
            problems.append("time.stop must exceed time.start")

    axes = []
    sweep_raw = raw.get("sweep", [])
    if isinstance(sweep_raw, dict):
        sweep_raw = [sweep_raw]
    if not isinstance(sweep_raw, list):
        problems.append("sweep must be an array of tables")
        sweep_raw = []
    if len(sweep_raw) > 2:
        problems.append("at most two sweep axes are supported")
    for i, ax in enumerate(sweep_raw):
        ax = _check_table(ax, AXIS_KEYS, f"sweep[{i}]", problems)
        name = ax.get("name")
        if name not in PARAM_KEYS or PARAM_KEYS.get(name) is not float:
            problems.append(f"sweep[{i}].name {name!r} is not a numeric parameter")
        pts = ax.get("points", 1)
        if not _typed(pts, int) or pts < 1:
            problems.append(f"sweep[{i}].points must be an integer >= 1")
        scale = ax.get("scale", "linear")
        if scale not in ("linear", "log"):
            problems.append(f"sweep[{i}].scale must be 'linear' or 'log'")
        start, stop = ax.get("start"), ax.get("stop", ax.get("start"))
        if not (_typed(start, float) and _typed(stop, float)):
            problems.append(f"sweep[{i}] needs numeric start/stop")
        elif scale == "log" and (start <= 0 or stop <= 0):
            problems.append(f"sweep[{i}] log scale needs positive bounds")
        if not any(p.startswith(f"sweep[{i}]") for p in problems):
            axes.append(SweepAxis(name, float(start), float(stop), int(pts), scale))
    if len({a.name for a in axes}) != len(axes):
        problems.append("sweep axes must have distinct names")

    solver = _check_table(raw.get("solver", {}), SOLVER_DEFAULTS, "solver", problems)
    merged_solver = {**SOLVER_DEFAULTS, **solver}
    if merged_solver["method"] not in ("auto", "expm", "adaptive", "rk4"):
        problems.append("solver.method must be auto, expm, adaptive or rk4")
    if merged_solver["steady_method"] not in ("null-space", "time-marching"):
        problems.append("solver.steady_method must be null-space or time-marching")
    if not (_typed(merged_solver["budget"], int) and merged_solver["budget"] >= 1):
        problems.append("solver.budget must be a positive integer")
    eps = merged_solver["weights_epsilon"]
    if eps != "auto" and not (_typed(eps, float) and 0 < eps <= 1):
        problems.append("solver.weights_epsilon must be 'auto' or in (0, 1]")

    options = _check_table(raw.get("options", {}), OPTION_DEFAULTS, "options", problems)
    merged_options = {**OPTION_DEFAULTS, **options}
    if merged_options["delta_f_convention"] not in ("symmetric", "printed"):
        problems.append("options.delta_f_convention must be symmetric or printed")
    if merged_options["qubit_frequency"] not in ("exact", "approx"):
        problems.append("options.qubit_frequency must be exact or approx")
    if merged_options["branch"] not in ("lowest", "highest"):
        problems.append("options.branch must be lowest or highest")
    if merged_options["model"] not in ("squeezed", "blockade", "effective"):
        problems.append("options.model must be squeezed, blockade or effective")
    if merged_options["evolution"] not in ("schrodinger", "master", "conditional", "steady"):
        problems.append("options.evolution must be schrodinger, master, conditional or steady")
    init = merged_options["initial"]
    if not (isinstance(init, list) and len(init) == 3 and all(_typed(v, int) and v >= 0 for v in init)):
        problems.append("options.initial must be three non-negative integers")

    _scenario_requirements(scenario, params, physical, axes, problems)
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        problems.append("output must be a path string")
    if not isinstance(raw.get("json", False), bool):
        problems.append("json must be a boolean")
    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(scenario=scenario, units=units, params=params, physical=physical,
                          space=space, time=time, sweep=axes, solver=merged_solver,
                          options=merged_options, output=output, json=raw.get("json", False), raw=raw)


def _has(params, key):
    return key in params or f"{key}_gk" in params


def _scenario_requirements(scenario, params, physical, axes, problems):
    swept = {a.name for a in axes}
    have = lambda k: _has(params, k) or k in swept or f"{k}_gk" in swept
    if scenario in ("enhancement", None):
        return
    if physical is None:
        if not have("G_k"):
            problems.append(f"scenario {scenario} needs params.G_k (or a [physical] table)")
        if scenario != "custom" and not have("omega_q"):
            problems.append(f"scenario {scenario} needs params.omega_q")
    if scenario in ("blockade-sweep", "blockade-temperature") and not have("probe"):
        problems.append(f"scenario {scenario} needs params.probe")
    if scenario == "blockade-temperature":
        for key in ("omega_abs_l", "omega_abs_r"):
            if not have(key) and physical is None:
                problems.append(f"scenario blockade-temperature needs params.{key} (lab-frame frequency)")
        if "temperature" not in swept and "temperature" not in params:
            problems.append("scenario blockade-temperature needs a temperature sweep axis")


def _coerce_override(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides (values parsed as TOML literals)."""
    raw = copy.deepcopy(raw)
    problems = []
    for item in overrides or []:
        if "=" not in item:
            problems.append(f"override {item!r} is not key=value")
            continue
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                problems.append(f"override {key!r} does not address a table")
                break
        else:
            node[parts[-1]] = _coerce_override(text.strip())
    if problems:
        raise ConfigError(problems)
    return raw


def load_config(path, overrides: list[str] | None = None) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(apply_overrides(raw, overrides or []))


def resolve_params(cfg: ScenarioConfig, overrides: dict[str, Any] | None = None) -> dict:
    """Merge sweep-cell overrides into [params] and convert to internal units."""
    merged = dict(cfg.params)
    for key, value in (overrides or {}).items():
        base = key[:-3] if key.endswith("_gk") else key
        merged.pop(base, None)
        merged.pop(f"{base}_gk", None)
        merged[key] = value
    scale = cfg.unit_scale
    out: dict[str, Any] = {}
    if "G_k" in merged:
        out["G_k"] = merged["G_k"] * scale
    for key, value in merged.items():
        if key == "G_k":
            continue
        if key.endswith("_gk"):
            if "G_k" not in out:
                raise ConfigError(f"params.{key} needs params.G_k")
            out[key[:-3]] = value * out["G_k"]
        elif key in FREQ_PARAMS:
            out[key] = value * scale
        elif key == "temperature":
            out[key] = value * 1e-3
        else:
            out[key] = value
    return out


def resolve_physical(cfg: ScenarioConfig) -> dict | None:
    if cfg.physical is None:
        return None
    scale = cfg.unit_scale
    return {k: (v * 1e-3 if k == "temperature" else v * scale) for k, v in cfg.physical.items()}
