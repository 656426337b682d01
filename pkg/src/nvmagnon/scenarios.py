"""Scenario execution and parameter sweeps producing ResultTables.

Each scenario is a cell function: given the resolved parameters of one sweep
grid point it returns rows (one per time sample for time-resolved
scenarios).  The sweep engine evaluates cells on a bounded thread pool and
assembles them in grid order, so output does not depend on scheduling.
"""
from __future__ import annotations

import itertools
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import hilbert as hs
from . import measures
from .blockade import (ComplexFrequencies, amplitude_steady_state, g2_analytic,
                       optimal_condition_residual, solve_optimal_frequency)
from .config import DEFAULT_BLOCKADE_RATES_MHZ, ScenarioConfig, SweepAxis, resolve_params, resolve_physical
from .results import ResultTable
from .dynamics import (TimeGrid, evolve_conditional, evolve_master, evolve_schrodinger,
                       excitation_weights, steady_state)
from .errors import (BudgetExceededError, ConfigError, InvalidArgumentError, SolverError,
                     TruncationLeakageError, TruncationWarning, UndefinedCorrelationError)
from .model import (PhysicalParams, build_collapse_terms, build_h_blockade, build_h_conditional,
                    build_h_eff, build_h_squeezed, derive, enhancement_ratios, squeezed_frame,
                    thermal_occupation)

THREADS_ENV = "NVMAGNON_THREADS"
NAN = float("nan")
BLOCKADE_SCENARIOS = ("blockade-sweep", "blockade-temperature")


@dataclass
class CellResult:
    rows: list[dict]
    leakage: float = 0.0
    flags: set = field(default_factory=set)


# ---------------------------------------------------------------- parameters

def build_derived(cfg: ScenarioConfig, p: dict):
    """DerivedParams for one cell: the physical chain or the direct squeezed-frame values."""
    flags = set()
    rates = {k: p[k] for k in ("kappa_l", "kappa_r", "gamma_q") if k in p}
    if cfg.scenario in BLOCKADE_SCENARIOS:
        for key, mhz in DEFAULT_BLOCKADE_RATES_MHZ.items():
            if key not in rates and (cfg.physical is None or key not in cfg.physical):
                rates[key] = mhz * 2 * math.pi * 1e6
                flags.add("rates:dissipative-rabi-defaults")
    extra = {k: p[k] for k in ("omega_abs_l", "omega_abs_r") if k in p}
    phys = resolve_physical(cfg)
    if phys is not None:
        phys = {k: v for k, v in phys.items() if k != "temperature"}
        d = derive(PhysicalParams(**phys), delta_f_convention=cfg.options["delta_f_convention"],
                   exact_qubit_frequency=cfg.options["qubit_frequency"] == "exact",
                   branch=cfg.options["branch"])
        d = replace(d, **rates, **extra)
        if "detuning" in p and d.omega_s_r is not None:
            d = replace(d, omega_s_r=d.omega_s_r + p["detuning"])
    else:
        d = squeezed_frame(p["G_k"], p.get("xi", 0.0), p.get("omega_q", 0.0),
                           omega_s_l=p.get("omega_s_l", 0.0), detuning=p.get("detuning", 0.0),
                           coupling=p.get("coupling", "exact"), **rates, **extra)
        if "omega_s_r" in p:
            d = replace(d, omega_s_r=p["omega_s_r"] + p.get("detuning", 0.0))
    unknown = p.get("optimal_unknown", "")
    if unknown:
        roots = solve_optimal_frequency(ComplexFrequencies.from_derived(d), unknown, d.G_s, p.get("probe", 0.0))
        if not roots:
            raise SolverError(f"no real {unknown} satisfies the perfect-blockade condition")
        best = min(roots, key=lambda r: abs(r.imag_mismatch))
        d = replace(d, **{unknown: best.value})
        flags.add(f"optimal:{unknown}")
    return d.with_flags(*sorted(flags)), flags


def _space(cfg: ScenarioConfig, default: int) -> hs.SpaceDescriptor:
    return hs.make_space((cfg.space.get("fock_l", default), cfg.space.get("fock_r", default), 2))


def _grid(cfg: ScenarioConfig, G_k: float) -> TimeGrid:
    start = cfg.time.get("start", 0.0)
    stop = cfg.time.get("stop", 10.0)
    scale = 1.0 / G_k if cfg.time.get("unit", "gk") == "gk" else 1e-6
    return TimeGrid(start * scale, stop * scale, cfg.time.get("points", 501))


def _dissipative(d, temperature) -> bool:
    return bool(d.kappa_l or d.kappa_r or d.gamma_q or temperature)


def _leak(meta) -> float:
    return max(meta.get("leakage_max", {}).values(), default=0.0)


def _steady_leak(rho) -> float:
    return max(hs.top_level_population(rho, k) for k in rho.space.fock_subsystems())


# ---------------------------------------------------------------- cells

def cell_enhancement(cfg, p) -> CellResult:
    xi = p.get("xi", 0.0)
    r = enhancement_ratios(xi, xi)
    return CellResult([{"xi": xi, "exact_joint": r.exact_joint, "paper_asymptote": r.paper_asymptote,
                        "single": r.single, "coop_exact": r.coop_exact, "coop_asymptote": r.coop_asymptote}])


def _time_rows(grid, G_k, records):
    rows = []
    for i, t in enumerate(grid.times):
        row = {"t_s": float(t), "gk_t": float(t * G_k)}
        row.update({k: float(np.real(v[i])) for k, v in records.items()})
        rows.append(row)
    return rows


def _initial(cfg, space):
    return hs.basis_state(space, cfg.options["initial"])


def cell_rabi(cfg, p) -> CellResult:
    d, flags = build_derived(cfg, p)
    space = _space(cfg, 3)
    grid = _grid(cfg, d.G_k)
    H = build_h_squeezed(d, space)
    obs = measures.occupation_operators(space)
    psi0 = _initial(cfg, space)
    T = p.get("temperature", 0.0)
    if _dissipative(d, T):
        traj = evolve_master(H, build_collapse_terms(d, space, temperature=T), psi0, grid, obs,
                             method=cfg.solver["method"], rtol=cfg.solver["rtol"], atol=cfg.solver["atol"],
                             leakage_threshold=math.inf)
    else:
        traj = evolve_schrodinger(H, psi0, grid, obs, leakage_threshold=math.inf)
    records = {k: traj[k] for k in ("n_l", "n_r", "qubit")}
    return CellResult(_time_rows(grid, d.G_k, records), _leak(traj.meta), flags | set(d.flags))


def cell_entanglement(cfg, p) -> CellResult:
    d, flags = build_derived(cfg, p)
    space = _space(cfg, 3)
    grid = _grid(cfg, d.G_k)
    delta = p.get("detuning", 0.0)
    psi0 = _initial(cfg, space)
    clipped = [False]

    def contangle(state, normalize=True):
        res = measures.contangle_analysis(state, normalize=normalize)
        clipped[0] |= res.clipped
        return res.value

    tangle_raw = lambda s: measures.residual_tangle(s, normalize=False)
    T = p.get("temperature", 0.0)
    if _dissipative(d, T):
        H = build_h_squeezed(d, space)
        me = evolve_master(H, build_collapse_terms(d, space, temperature=T), psi0, grid,
                           {"E_tau": contangle, "fidelity": measures.ghz_fidelity},
                           method=cfg.solver["method"], rtol=cfg.solver["rtol"], atol=cfg.solver["atol"],
                           leakage_threshold=math.inf)
        con = evolve_conditional(build_h_conditional(d, space), psi0, grid,
                                 {"tau": tangle_raw}, store_states=True)
        e_con = [contangle(s, normalize=False) for s in con.states]
        records = {"tau": con["tau"], "E_tau": me["E_tau"], "E_tau_conditional": np.array(e_con),
                   "fidelity": me["fidelity"], "norm": con["norm"]}
        leak = _leak(me.meta)
        flags.add("contangle:conditional-unnormalized")
    else:
        traj = evolve_schrodinger(build_h_squeezed(d, space), psi0, grid,
                                  {"tau": tangle_raw, "E_tau": contangle, "fidelity": measures.ghz_fidelity},
                                  leakage_threshold=math.inf)
        records = {"tau": traj["tau"], "E_tau": traj["E_tau"], "E_tau_conditional": traj["E_tau"],
                   "fidelity": traj["fidelity"], "norm": np.ones(len(grid.times))}
        leak = _leak(traj.meta)
    records = {"tau_closed_form": np.atleast_1d(measures.residual_tangle_closed_form(d.G_s, delta, grid.times)),
               **records}
    flags = flags | set(d.flags) | {"contangle:log2"}
    if clipped[0]:
        flags.add("contangle:negative-residual-clipped")
    return CellResult(_time_rows(grid, d.G_k, records), leak, flags)


def _weights_epsilon(cfg, d, freqs, probe, temperature) -> float:
    """Typical single-excitation amplitude: the coherent C01e or the thermal sqrt(n)."""
    eps = cfg.solver["weights_epsilon"]
    if eps != "auto":
        return float(eps)
    try:
        scale = abs(amplitude_steady_state(freqs, d.G_s, probe).c01e)
    except (SolverError, InvalidArgumentError):
        return 1.0
    if temperature > 0:
        for w in (d.omega_abs_l, d.omega_abs_r):
            if w is not None:
                scale = max(scale, math.sqrt(thermal_occupation(w, temperature)))
    return float(min(1.0, max(scale, 1e-12)))


def _blockade_point(cfg, p):
    d, flags = build_derived(cfg, p)
    probe = p["probe"]
    T = p.get("temperature", 0.0)
    space = _space(cfg, 4)
    freqs = ComplexFrequencies.from_derived(d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            amps = amplitude_steady_state(freqs, d.G_s, probe)
            g2a = g2_analytic(amps)
        except (UndefinedCorrelationError, SolverError):
            g2a = NAN
        eps = _weights_epsilon(cfg, d, freqs, probe, T)
    H = build_h_blockade(d, space, probe)
    terms = build_collapse_terms(d, space, temperature=T)
    ss = steady_state(H, terms, cfg.solver["steady_method"], weights=excitation_weights(space, eps))
    rho = ss.state
    try:
        g2n = measures.g2_zero(rho, "r")
    except UndefinedCorrelationError:
        g2n = NAN
    pop = lambda lv: float(rho.data[space.index_of(lv), space.index_of(lv)].real)
    res = optimal_condition_residual(freqs, d.G_s, probe)
    # the same condition read with real frequencies only (decay rates dropped)
    lossless = replace(freqs, kappa_l=0.0, kappa_r=0.0, gamma_q=0.0)
    a = freqs.left + freqs.qubit
    scale = max(d.G_s**2, abs(a * (a + freqs.right)), probe**2)
    row = {"g2_analytic": g2a, "g2_numeric": g2n,
           "p01e": pop((0, 1, 0)), "p02e": pop((0, 2, 0)), "p10f": pop((1, 0, 1)), "p11f": pop((1, 1, 1)),
           "n_r": float(hs.expect(hs.number_op(space, 1), rho).real),
           "condition_residual": abs(res) / scale,
           "condition_residual_real": abs(optimal_condition_residual(lossless, d.G_s, probe)) / scale}
    flags = flags | set(d.flags) | {"amplitudes:rederived", "detuning:offset-on-omega_s_r"}
    return d, row, _steady_leak(rho), flags


def cell_blockade_sweep(cfg, p) -> CellResult:
    d, row, leak, flags = _blockade_point(cfg, p)
    row = {"detuning_gk": p.get("detuning", 0.0) / d.G_k, **row}
    return CellResult([row], leak, flags)


def cell_blockade_temperature(cfg, p) -> CellResult:
    d, row, leak, flags = _blockade_point(cfg, p)
    T = p.get("temperature", 0.0)
    nbar = thermal_occupation(d.omega_abs_r, T) if d.omega_abs_r is not None else NAN
    out = {"T_mK": T * 1e3, "g2_numeric": row["g2_numeric"], "n_thermal_r": nbar,
           "g2_analytic": row["g2_analytic"]}
    return CellResult([out], leak, flags | {"thermal:bose-einstein-lab-frame"})


def cell_custom(cfg, p) -> CellResult:
    d, flags = build_derived(cfg, p)
    model = cfg.options["model"]
    evolution = cfg.options["evolution"]
    probe = p.get("probe", 0.0)
    T = p.get("temperature", 0.0)
    space = _space(cfg, 3)
    if model == "effective":
        H = build_h_eff(d, space)
    elif model == "blockade":
        H = build_h_blockade(d, space, probe)
    else:
        H = build_h_squeezed(d, space)
    obs = {**measures.occupation_operators(space), "fidelity": measures.ghz_fidelity}
    flags = flags | set(d.flags)
    if evolution == "steady":
        ss = steady_state(H, build_collapse_terms(d, space, temperature=T), cfg.solver["steady_method"])
        row = {k: float(np.real(hs.expect(o, ss.state))) for k, o in obs.items() if k != "fidelity"}
        row["fidelity"] = measures.ghz_fidelity(ss.state)
        try:
            row["g2_r"] = measures.g2_zero(ss.state, "r")
        except UndefinedCorrelationError:
            row["g2_r"] = NAN
        return CellResult([row], _steady_leak(ss.state), flags)
    grid = _grid(cfg, d.G_k)
    psi0 = _initial(cfg, space)
    if evolution == "master":
        traj = evolve_master(H, build_collapse_terms(d, space, temperature=T), psi0, grid, obs,
                             method=cfg.solver["method"], rtol=cfg.solver["rtol"], atol=cfg.solver["atol"],
                             leakage_threshold=math.inf)
    elif evolution == "conditional":
        traj = evolve_conditional(build_h_conditional(d, space, probe=probe), psi0, grid, obs)
    else:
        traj = evolve_schrodinger(H, psi0, grid, obs, leakage_threshold=math.inf)
    records = {k: traj[k] for k in obs}
    if "norm" in traj.records:
        records["norm"] = traj["norm"]
    return CellResult(_time_rows(grid, d.G_k, records), _leak(traj.meta), flags)


CELLS = {"enhancement": cell_enhancement, "rabi": cell_rabi, "entanglement": cell_entanglement,
         "blockade-sweep": cell_blockade_sweep, "blockade-temperature": cell_blockade_temperature,
         "custom": cell_custom}

UNITS = {"t_s": "s", "gk_t": "G_k*t", "T_mK": "mK", "xi": "1"}


# ---------------------------------------------------------------- sweep engine

def default_axes(cfg: ScenarioConfig) -> list[SweepAxis]:
    if cfg.sweep:
        return cfg.sweep
    if cfg.scenario == "enhancement" and "xi" not in cfg.params:
        return [SweepAxis("xi", 0.0, 3.0, 121)]
    return []


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, min(8, os.cpu_count() or 1))


def _suggest(axes, budget):
    total = math.prod(a.points for a in axes)
    factor = (total / budget) ** (1 / len(axes))
    return ", ".join(f"{a.name}: {a.points} -> {max(1, int(a.points / factor))} points" for a in axes)


def run_scenario(cfg: ScenarioConfig, threads: int | None = None) -> ResultTable:
    """Evaluate the configured scenario over its sweep grid (a single cell without axes)."""
    axes = default_axes(cfg)
    total = math.prod(a.points for a in axes) if axes else 1
    if total > cfg.solver["budget"]:
        raise BudgetExceededError(
            [f"sweep has {total} cells, over the budget of {cfg.solver['budget']}; "
             f"suggested coarsening: {_suggest(axes, cfg.solver['budget'])}"])
    cells = [dict(zip([a.name for a in axes], vals))
             for vals in itertools.product(*(a.values() for a in axes))] or [{}]
    cell_fn = CELLS[cfg.scenario]

    def run(point):
        try:
            return cell_fn(cfg, resolve_params(cfg, point))
        except SolverError as exc:
            where = ", ".join(f"{k}={v!r}" for k, v in point.items()) or "base point"
            raise type(exc)(f"{cfg.scenario} at {where}: {exc}") from exc
        except InvalidArgumentError as exc:
            raise ConfigError(f"{cfg.scenario}: {exc}") from exc

    threads = threads or default_threads()
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(cells))) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]

    rows, leak, flags = [], 0.0, set()
    for point, res in zip(cells, results):
        leak = max(leak, res.leakage)
        flags |= res.flags
        for r in res.rows:
            rows.append({**{k: v for k, v in point.items() if k not in r}, **r})
    if leak > cfg.solver["leakage_hard_limit"]:
        raise TruncationLeakageError(
            f"top Fock level population {leak:.3e} exceeds the hard limit "
            f"{cfg.solver['leakage_hard_limit']:.1e}; increase [space] fock_l/fock_r")
    if leak > cfg.solver["leakage_threshold"]:
        flags.add("leakage:above-threshold")
        warnings.warn(f"truncation leakage {leak:.3e} exceeds {cfg.solver['leakage_threshold']:.1e}",
                      TruncationWarning, stacklevel=2)
    columns = list(rows[0])
    unit_label = "MHz (f)" if cfg.units == "f" else "rad/us"
    units = {}
    for c in columns:
        if c in UNITS:
            units[c] = UNITS[c]
        elif c.endswith("_gk"):
            units[c] = "G_k"
        elif c == "temperature":
            units[c] = "mK"
        elif c in cfg.params or any(a.name == c for a in axes):
            units[c] = unit_label if c != "xi" else "1"
        else:
            units[c] = "1"
    metadata = {
        "scenario": cfg.scenario,
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "solver": {k: cfg.solver[k] for k in ("method", "rtol", "atol", "steady_method")},
        "leakage_max": leak,
        "flags": sorted(flags),
        "axes": [[a.name, a.start, a.stop, a.points, a.scale] for a in axes],
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return ResultTable(columns, units, [[r[c] for c in columns] for r in rows], metadata)

