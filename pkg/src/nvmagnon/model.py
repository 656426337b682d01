"""Parameters and Hamiltonian/dissipator builders for the NV-magnon-magnon system.

All frequencies, couplings and rates are angular [rad/s] (or any consistent
angular unit when the builders are fed dimensionless numbers).

Dissipator convention: a LindbladTerm with rate ``k`` contributes
``k * (2 o rho o^dag - rho o^dag o - o^dag o rho)``, so a bare mode's
occupation decays as exp(-2 k t).  The no-jump (conditional) Hamiltonian,
the analytic blockade amplitudes and the classical amplitude equation use
``-i k/2`` damping instead; both conventions are kept as given.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple, Optional

import numpy as np
import scipy.constants as const

from . import hilbert as hs
from .errors import (InvalidArgumentError, MissingParameterError, ModelWarning, ResonanceError,
                     UnstableSqueezingError)

# spin labels
QUTRIT_G, QUTRIT_E, QUTRIT_F = 0, 1, 2
QUBIT_E, QUBIT_F = 0, 1
MODE_INDEX = {"l": 0, "r": 1}

DISPERSIVE_WARN = 0.1
DISPERSIVE_SILENT = 0.05


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory-frame inputs.  Rates and couplings in rad/s, temperature in K."""

    omega_l: float
    omega_r: float
    kerr_l: float
    kerr_r: float
    g_l: float
    g_r: float
    nu_l: float
    nu_r: float
    drive_l: float
    drive_r: float
    omega_g: float
    omega_e: float
    omega_f: float
    kappa_l: float = 0.0
    kappa_r: float = 0.0
    gamma_q: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        bad = [f.name for f in fields(self)
               if f.name in ("g_l", "g_r", "kappa_l", "kappa_r", "gamma_q", "temperature")
               and getattr(self, f.name) < 0]
        if bad:
            raise InvalidArgumentError(f"must be non-negative: {', '.join(bad)}")

    def mode(self, mode: str) -> dict:
        if mode not in MODE_INDEX:
            raise InvalidArgumentError(f"mode must be 'l' or 'r', got {mode!r}")
        return {
            "omega": getattr(self, f"omega_{mode}"),
            "kerr": getattr(self, f"kerr_{mode}"),
            "nu": getattr(self, f"nu_{mode}"),
            "drive": getattr(self, f"drive_{mode}"),
            "kappa": getattr(self, f"kappa_{mode}"),
        }


@dataclass(frozen=True)
class DerivedParams:
    """Output of the derivation chain; any field may be set directly.

    ``kerr_dpa_*`` is the (real) DPA coefficient, ``big_delta_*`` the
    qutrit-magnon detunings used in the dispersive elimination and
    ``omega_abs_*`` the lab-frame mode frequencies used for thermal occupations.
    """

    delta_l: Optional[float] = None
    delta_r: Optional[float] = None
    delta_e: Optional[float] = None
    delta_f: Optional[float] = None
    omega_g: Optional[float] = 0.0
    amplitude_l: Optional[complex] = None
    amplitude_r: Optional[complex] = None
    delta_k_l: Optional[float] = None
    delta_k_r: Optional[float] = None
    omega_k_l: Optional[float] = None
    omega_k_r: Optional[float] = None
    kerr_dpa_l: Optional[float] = 0.0
    kerr_dpa_r: Optional[float] = 0.0
    g_l: Optional[float] = None
    g_r: Optional[float] = None
    big_delta_l: Optional[float] = None
    big_delta_r: Optional[float] = None
    G_k: Optional[float] = None
    omega_q: Optional[float] = None
    xi_l: Optional[float] = None
    xi_r: Optional[float] = None
    omega_s_l: Optional[float] = None
    omega_s_r: Optional[float] = None
    G_s: Optional[float] = None
    kappa_l: float = 0.0
    kappa_r: float = 0.0
    gamma_q: float = 0.0
    C_k: Optional[float] = None
    C_s: Optional[float] = None
    omega_abs_l: Optional[float] = None
    omega_abs_r: Optional[float] = None
    dispersive_ratio_l: Optional[float] = None
    dispersive_ratio_r: Optional[float] = None
    dispersive_flag: bool = False
    flags: tuple[str, ...] = field(default_factory=tuple)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise MissingParameterError(f"derived parameters not set: {', '.join(missing)}")

    def with_flags(self, *flags: str) -> "DerivedParams":
        merged = tuple(dict.fromkeys(self.flags + flags))
        return replace(self, flags=merged)


@dataclass(frozen=True)
class LindbladTerm:
    jump: hs.Operator
    rate: float
    thermal_occupation: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise InvalidArgumentError(f"negative rate {self.rate}")
        if self.thermal_occupation < 0:
            raise InvalidArgumentError(f"negative thermal occupation {self.thermal_occupation}")


class ClassicalRoot(NamedTuple):
    amplitude: complex
    stable: bool


class KerrLinearization(NamedTuple):
    omega_k: float
    dpa: complex
    delta_k: float


class DispersiveResult(NamedTuple):
    G_k: float
    omega_q: float
    big_delta_l: float
    big_delta_r: float
    ratio_l: float
    ratio_r: float
    flagged: bool


class Squeezing(NamedTuple):
    xi: float
    omega_s: float


class EnhancementRatios(NamedTuple):
    exact_joint: float
    paper_asymptote: float
    single: float
    coop_exact: float
    coop_asymptote: float


# ---------------------------------------------------------------- derivation

def _classical_jacobian(n, m, detuning, kerr, kappa):
    # linearization of dm/dt = -(i(detuning - kerr|m|^2) + kappa/2) m - i drive
    a = -(1j * (detuning - 2 * kerr * n) + kappa / 2)
    b = 1j * kerr * m * m
    return np.array([[a, b], [np.conj(b), np.conj(a)]])


def solve_classical_amplitude(params: PhysicalParams, mode: str) -> list[ClassicalRoot]:
    """Steady states of the driven, damped Kerr mode, each tagged with linear stability.

    Solves (i delta - i K |m|^2 + kappa/2) m = -i Omega through the cubic
    K^2 n^3 - 2 delta K n^2 + (delta^2 + kappa^2/4) n - Omega^2 = 0 in n = |m|^2.
    """
    p = params.mode(mode)
    detuning = p["omega"] - p["nu"]
    kerr, drive, kappa = p["kerr"], p["drive"], p["kappa"]
    if not all(math.isfinite(x) for x in (detuning, kerr, drive, kappa)):
        raise InvalidArgumentError("drive amplitude and detuning must be finite")
    if drive == 0:
        return [ClassicalRoot(0j, True)]
    if kerr == 0:
        ns = [drive**2 / (detuning**2 + kappa**2 / 4)]
    else:
        coeffs = [kerr**2, -2 * detuning * kerr, detuning**2 + kappa**2 / 4, -(drive**2)]
        roots = np.roots(coeffs)
        scale = max(abs(r) for r in roots)
        ns = sorted({float(r.real) for r in roots
                     if abs(r.imag) <= 1e-9 * max(scale, 1e-300) and r.real > 0})
    out = []
    for n in ns:
        m = -1j * drive / (1j * (detuning - kerr * n) + kappa / 2)
        eig = np.linalg.eigvals(_classical_jacobian(n, m, detuning, kerr, kappa))
        out.append(ClassicalRoot(complex(m), bool(np.all(eig.real < 0))))
    return out


def linearize_kerr(params: PhysicalParams, amplitude: complex, mode: str) -> KerrLinearization:
    """Shifted frequency, DPA coefficient and Kerr shift about a classical operating point."""
    p = params.mode(mode)
    detuning = p["omega"] - p["nu"]
    n = abs(amplitude) ** 2
    delta_k = -2 * p["kerr"] * n
    return KerrLinearization(detuning + delta_k, complex(p["kerr"] * amplitude**2), delta_k)


def dispersive_reduce(g_l: float, g_r: float, delta_e: float, delta_f: float, omega_g: float,
                      omega_k_l: float, omega_k_r: float, *, exact_qubit_frequency: bool = True
                      ) -> DispersiveResult:
    """Second-order elimination of the qutrit ground level."""
    big_l = delta_e - omega_g - omega_k_l
    big_r = delta_f - omega_g - omega_k_r
    if big_l == 0 or big_r == 0:
        raise ResonanceError(
            f"dispersive elimination needs nonzero detunings, got Delta_l={big_l}, Delta_r={big_r}")
    G_k = 0.5 * g_l * g_r * (1 / big_l + 1 / big_r)
    omega_q = delta_f - delta_e
    if exact_qubit_frequency:
        omega_q += g_r**2 / big_r - g_l**2 / big_l
    ratio_l, ratio_r = abs(g_l / big_l), abs(g_r / big_r)
    worst = max(ratio_l, ratio_r)
    if worst > DISPERSIVE_WARN:
        warnings.warn(f"dispersive ratio g/|Delta| = {worst:.3g} exceeds {DISPERSIVE_WARN}",
                      ModelWarning, stacklevel=2)
    return DispersiveResult(G_k, omega_q, big_l, big_r, ratio_l, ratio_r, worst > DISPERSIVE_SILENT)


def squeezing_transform(omega_k: float, dpa: float) -> Squeezing:
    """Bogoliubov parameter and squeezed-mode frequency for omega_k m^dag m - (K/2)(m^dag^2 + m^2).

    A negative ``omega_k`` (rotating frame below the drive) is accepted and
    yields a negative squeezed frequency.
    """
    if abs(dpa) >= abs(omega_k):
        raise UnstableSqueezingError(
            f"|DPA coefficient| {abs(dpa):.6g} >= |omega_k| {abs(omega_k):.6g}: squeezed frequency is imaginary")
    xi = 0.25 * math.log((omega_k + dpa) / (omega_k - dpa))
    omega_s = math.copysign(math.sqrt(omega_k**2 - dpa**2), omega_k)
    return Squeezing(xi, omega_s)


def enhancement_ratios(xi_l: float, xi_r: float) -> EnhancementRatios:
    """Coupling and cooperativity gains from squeezing both magnon modes.

    ``exact_joint`` is the kept Bogoliubov coefficient cosh(xi_l) cosh(xi_r);
    ``paper_asymptote`` its large-xi form exp(xi_l + xi_r)/4; ``single`` the
    gain with only one mode (the left) squeezed.
    """
    exact = math.cosh(xi_l) * math.cosh(xi_r)
    asym = math.exp(xi_l + xi_r) / 4
    return EnhancementRatios(exact, asym, math.cosh(xi_l), exact**3, asym**3)


def cooperativity(G: float, kappa_l: float, kappa_r: float, gamma_q: float) -> Optional[float]:
    denom = kappa_l * kappa_r * gamma_q
    return G**3 / denom if denom > 0 else None


def derive(params: PhysicalParams, *, delta_f_convention: str = "symmetric",
           exact_qubit_frequency: bool = True, branch: str = "lowest") -> DerivedParams:
    """Run the full chain: amplitudes, Kerr linearization, dispersive reduction, squeezing.

    ``delta_f_convention``: ``"symmetric"`` uses omega_f - nu_r, ``"printed"``
    uses omega_e - nu_r.  ``branch`` picks the stable classical root with the
    lowest or highest |m| when the mode is bistable.
    """
    if delta_f_convention not in ("symmetric", "printed"):
        raise InvalidArgumentError(f"unknown delta_f_convention {delta_f_convention!r}")
    if branch not in ("lowest", "highest"):
        raise InvalidArgumentError(f"unknown branch {branch!r}")
    flags = [f"delta_f:{delta_f_convention}",
             "qubit_frequency:" + ("exact" if exact_qubit_frequency else "approx"),
             "coupling:exact-bogoliubov"]
    delta_e = params.omega_e - params.nu_l
    delta_f = (params.omega_f if delta_f_convention == "symmetric" else params.omega_e) - params.nu_r

    lin = {}
    for mode in ("l", "r"):
        roots = solve_classical_amplitude(params, mode)
        stable = [r for r in roots if r.stable] or roots
        if len(roots) > 1:
            flags.append(f"bistable_{mode}:{branch}")
        stable.sort(key=lambda r: abs(r.amplitude))
        amp = stable[0 if branch == "lowest" else -1].amplitude
        lin[mode] = (amp, linearize_kerr(params, amp, mode))

    disp = dispersive_reduce(params.g_l, params.g_r, delta_e, delta_f, params.omega_g,
                             lin["l"][1].omega_k, lin["r"][1].omega_k,
                             exact_qubit_frequency=exact_qubit_frequency)
    if disp.flagged:
        flags.append("dispersive:weak")

    values = {}
    for mode in ("l", "r"):
        amp, kl = lin[mode]
        # drive phase absorbed into the mode operator so the DPA coefficient is real
        dpa = abs(kl.dpa)
        values[f"amplitude_{mode}"] = amp
        values[f"delta_k_{mode}"] = kl.delta_k
        values[f"omega_k_{mode}"] = kl.omega_k
        values[f"kerr_dpa_{mode}"] = dpa
        try:
            sq = squeezing_transform(kl.omega_k, dpa)
            values[f"xi_{mode}"], values[f"omega_s_{mode}"] = sq
        except UnstableSqueezingError:
            flags.append(f"squeezing_{mode}:unstable")
            values[f"xi_{mode}"] = values[f"omega_s_{mode}"] = None

    G_s = None
    if values["xi_l"] is not None and values["xi_r"] is not None:
        G_s = disp.G_k * math.cosh(values["xi_l"]) * math.cosh(values["xi_r"])
    rates = (params.kappa_l, params.kappa_r, params.gamma_q)
    return DerivedParams(
        delta_l=params.omega_l - params.nu_l, delta_r=params.omega_r - params.nu_r,
        delta_e=delta_e, delta_f=delta_f, omega_g=params.omega_g,
        g_l=params.g_l, g_r=params.g_r,
        big_delta_l=disp.big_delta_l, big_delta_r=disp.big_delta_r,
        G_k=disp.G_k, omega_q=disp.omega_q, G_s=G_s,
        kappa_l=params.kappa_l, kappa_r=params.kappa_r, gamma_q=params.gamma_q,
        C_k=cooperativity(disp.G_k, *rates),
        C_s=cooperativity(G_s, *rates) if G_s is not None else None,
        omega_abs_l=params.omega_l, omega_abs_r=params.omega_r,
        dispersive_ratio_l=disp.ratio_l, dispersive_ratio_r=disp.ratio_r,
        dispersive_flag=disp.flagged, flags=tuple(flags), **values)


def squeezed_frame(G_k: float, xi: float, omega_q: float, *, omega_s_l: float = 0.0,
                   detuning: float = 0.0, kappa_l: float = 0.0, kappa_r: float = 0.0,
                   gamma_q: float = 0.0, coupling: str = "exact", **extra) -> DerivedParams:
    """DerivedParams for the squeezed-frame model specified directly.

    The right squeezed mode is placed at ``omega_s_l + omega_q + detuning``
    (resonant baseline plus offset).  ``coupling="asymptote"`` uses
    G_k exp(2 xi)/4 instead of G_k cosh(xi)^2.
    """
    ratios = enhancement_ratios(xi, xi)
    if coupling == "exact":
        G_s = G_k * ratios.exact_joint
    elif coupling == "asymptote":
        G_s = G_k * ratios.paper_asymptote
    else:
        raise InvalidArgumentError(f"unknown coupling convention {coupling!r}")
    rates = (kappa_l, kappa_r, gamma_q)
    return DerivedParams(G_k=G_k, xi_l=xi, xi_r=xi, omega_q=omega_q, omega_s_l=omega_s_l,
                         omega_s_r=omega_s_l + omega_q + detuning, G_s=G_s,
                         kappa_l=kappa_l, kappa_r=kappa_r, gamma_q=gamma_q,
                         C_k=cooperativity(G_k, *rates), C_s=cooperativity(G_s, *rates),
                         flags=(f"coupling:{coupling}",), **extra)


# ---------------------------------------------------------------- builders

def _check_space(space: hs.SpaceDescriptor, spin_dim: int, what: str) -> None:
    dims = space.subsystem_dims
    if len(dims) != 3 or dims[2] != spin_dim:
        raise InvalidArgumentError(
            f"{what} needs a (Fock, Fock, {spin_dim}) space, got {dims}")


def _dpa_term(space, mode_index, coefficient):
    if not coefficient:
        return hs.zero_op(space)
    a = hs.lowering_op(space, mode_index)
    ad = a.dag()
    return (ad @ ad + a @ a) * (-coefficient / 2)


def build_h_full(derived: DerivedParams, space: hs.SpaceDescriptor) -> hs.Operator:
    """Rotating-frame qutrit-magnon Hamiltonian before the dispersive elimination."""
    _check_space(space, 3, "build_h_full")
    derived.require("delta_e", "delta_f", "omega_k_l", "omega_k_r", "g_l", "g_r")
    proj = lambda lvl: hs.spin_op(space, 2, "projector", (lvl,))
    h = (proj(QUTRIT_G) * (derived.omega_g or 0.0) + proj(QUTRIT_E) * derived.delta_e
         + proj(QUTRIT_F) * derived.delta_f)
    for idx, mode, level in ((0, "l", QUTRIT_E), (1, "r", QUTRIT_F)):
        a = hs.lowering_op(space, idx)
        h = h + hs.number_op(space, idx) * getattr(derived, f"omega_k_{mode}")
        h = h + _dpa_term(space, idx, getattr(derived, f"kerr_dpa_{mode}") or 0.0)
        sigma_plus = hs.spin_op(space, 2, "transition", (level, QUTRIT_G))
        coupling = a @ sigma_plus
        h = h + (coupling + coupling.dag()) * getattr(derived, f"g_{mode}")
    return h


def _qubit_terms(space, omega_q):
    return hs.spin_op(space, 2, "sigma_z") * (0.5 * omega_q)


def _exchange(space, G):
    """G (m_l m_r^dag sigma_- + h.c.) on a (Fock, Fock, 2) space."""
    sigma_minus = hs.spin_op(space, 2, "transition", (QUBIT_E, QUBIT_F))
    term = hs.lowering_op(space, 0) @ hs.raising_op(space, 1) @ sigma_minus
    return (term + term.dag()) * G


def build_h_eff(derived: DerivedParams, space: hs.SpaceDescriptor) -> hs.Operator:
    """Effective three-body Hamiltonian after eliminating the qutrit ground level."""
    _check_space(space, 2, "build_h_eff")
    derived.require("omega_q", "omega_k_l", "omega_k_r", "G_k")
    h = _qubit_terms(space, derived.omega_q)
    for idx, mode in ((0, "l"), (1, "r")):
        h = h + hs.number_op(space, idx) * getattr(derived, f"omega_k_{mode}")
        h = h + _dpa_term(space, idx, getattr(derived, f"kerr_dpa_{mode}") or 0.0)
    return h + _exchange(space, derived.G_k)


def build_h_squeezed(derived: DerivedParams, space: hs.SpaceDescriptor,
                     detuning: float = 0.0) -> hs.Operator:
    """Squeezed-frame Hamiltonian; ``detuning`` is added to the right squeezed frequency."""
    _check_space(space, 2, "build_h_squeezed")
    derived.require("omega_q", "omega_s_l", "omega_s_r", "G_s")
    return (_qubit_terms(space, derived.omega_q)
            + hs.number_op(space, 0) * derived.omega_s_l
            + hs.number_op(space, 1) * (derived.omega_s_r + detuning)
            + _exchange(space, derived.G_s))


def build_h_blockade(derived: DerivedParams, space: hs.SpaceDescriptor, probe: float,
                     detuning: float = 0.0) -> hs.Operator:
    """Squeezed-frame Hamiltonian plus a weak probe on the right mode."""
    if probe < 0:
        raise InvalidArgumentError("probe amplitude must be non-negative")
    h = build_h_squeezed(derived, space, detuning)
    a = hs.lowering_op(space, 1)
    return h + (a + a.dag()) * probe


def build_h_conditional(derived: DerivedParams, space: hs.SpaceDescriptor,
                        detuning: float = 0.0, probe: float = 0.0) -> hs.Operator:
    """Non-Hermitian no-jump Hamiltonian: H - i(k_l/2) n_l - i(k_r/2) n_r - i(g_q/2) |f><f|."""
    rates = (derived.kappa_l, derived.kappa_r, derived.gamma_q)
    if any(r < 0 for r in rates):
        raise InvalidArgumentError("decay rates must be non-negative")
    h = build_h_blockade(derived, space, probe, detuning) if probe else build_h_squeezed(derived, space, detuning)
    damping = (hs.number_op(space, 0) * derived.kappa_l + hs.number_op(space, 1) * derived.kappa_r
               + hs.spin_op(space, 2, "projector", (QUBIT_F,)) * derived.gamma_q)
    return h - damping * 0.5j


def thermal_occupation(omega_abs: float, temperature: float) -> float:
    """Bose-Einstein occupation at angular frequency ``omega_abs`` [rad/s] and ``temperature`` [K]."""
    if temperature < 0:
        raise InvalidArgumentError("temperature must be non-negative")
    if temperature == 0:
        return 0.0
    x = const.hbar * abs(omega_abs) / (const.k * temperature)
    return 1.0 / math.expm1(x)


def build_collapse_terms(derived: DerivedParams, space: hs.SpaceDescriptor, frame: str = "squeezed",
                         temperature: float = 0.0) -> list[LindbladTerm]:
    """Mode decay (with thermal up/down split at T > 0) and spin decay.

    On a qubit space the spin channel is |e><f|; on a qutrit space both
    |g><e| and |g><f| decay at ``gamma_q``.  Thermal occupations use the
    lab-frame ``omega_abs_*`` frequencies.
    """
    if frame not in ("squeezed", "bare"):
        raise InvalidArgumentError(f"unknown frame {frame!r}")
    if temperature < 0:
        raise InvalidArgumentError("temperature must be non-negative")
    dims = space.subsystem_dims
    if len(dims) != 3 or dims[2] not in (2, 3):
        raise InvalidArgumentError(f"collapse terms need a (Fock, Fock, 2|3) space, got {dims}")
    prefix = "m_s" if frame == "squeezed" else "m"
    terms = []
    for idx, mode in ((0, "l"), (1, "r")):
        rate = getattr(derived, f"kappa_{mode}")
        a = hs.lowering_op(space, idx)
        if temperature > 0:
            omega_abs = getattr(derived, f"omega_abs_{mode}")
            if omega_abs is None:
                raise MissingParameterError(
                    f"temperature {temperature} K needs the lab-frame frequency omega_abs_{mode}")
            nbar = thermal_occupation(omega_abs, temperature)
            terms.append(LindbladTerm(a, rate * (nbar + 1), nbar, f"{prefix}_{mode}"))
            terms.append(LindbladTerm(a.dag(), rate * nbar, nbar, f"{prefix}_{mode}^dag"))
        else:
            terms.append(LindbladTerm(a, rate, 0.0, f"{prefix}_{mode}"))
    if dims[2] == 2:
        terms.append(LindbladTerm(hs.spin_op(space, 2, "transition", (QUBIT_E, QUBIT_F)),
                                  derived.gamma_q, 0.0, "sigma_-"))
    else:
        for lvl, name in ((QUTRIT_E, "e"), (QUTRIT_F, "f")):
            terms.append(LindbladTerm(hs.spin_op(space, 2, "transition", (QUTRIT_G, lvl)),
                                      derived.gamma_q, 0.0, f"sigma_g{name}"))
    return terms
