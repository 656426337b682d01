"""Weak-probe amplitude method for magnon blockade on the right squeezed mode.

The state is truncated to |0,0,e>, |0,1,e>, |0,2,e>, |1,0,f>, |1,1,f> with the
|e> level at zero energy and the |f> level at omega_q.  Amplitude equations
(i dC/dt = M C) follow from the probe Hamiltonian in that basis:

    i C01e' = w_r C01e + G C10f + W C00e + sqrt2 W C02e
    i C02e' = 2 w_r C02e + sqrt2 G C11f + sqrt2 W C01e
    i C10f' = (w_l + w_q) C10f + G C01e + W C11f
    i C11f' = (w_l + w_q + w_r) C11f + sqrt2 G C02e + W C10f

with complex frequencies w = omega - i*rate/2 and probe amplitude W.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import (InvalidArgumentError, ModelWarning, ResonanceDegeneracyError,
                     UndefinedCorrelationError)
from .model import DerivedParams

SQRT2 = np.sqrt(2.0)
WEAK_PROBE_RATIO = 0.5
AMPLITUDE_FLOOR = 1e-150


@dataclass(frozen=True)
class ComplexFrequencies:
    omega_s_l: float
    omega_s_r: float
    omega_q: float
    kappa_l: float = 0.0
    kappa_r: float = 0.0
    gamma_q: float = 0.0

    def __post_init__(self):
        if min(self.kappa_l, self.kappa_r, self.gamma_q) < 0:
            raise InvalidArgumentError("decay rates must be non-negative")

    @classmethod
    def from_derived(cls, derived: DerivedParams, detuning: float = 0.0) -> "ComplexFrequencies":
        derived.require("omega_s_l", "omega_s_r", "omega_q")
        return cls(derived.omega_s_l, derived.omega_s_r + detuning, derived.omega_q,
                   derived.kappa_l, derived.kappa_r, derived.gamma_q)

    @property
    def left(self) -> complex:
        return self.omega_s_l - 0.5j * self.kappa_l

    @property
    def right(self) -> complex:
        return self.omega_s_r - 0.5j * self.kappa_r

    @property
    def qubit(self) -> complex:
        return self.omega_q - 0.5j * self.gamma_q

    def shifted(self, detuning: float) -> "ComplexFrequencies":
        return replace(self, omega_s_r=self.omega_s_r + detuning)

    def scaled(self, factor: float) -> "ComplexFrequencies":
        return ComplexFrequencies(*(factor * v for v in (self.omega_s_l, self.omega_s_r, self.omega_q,
                                                         self.kappa_l, self.kappa_r, self.gamma_q)))


@dataclass(frozen=True)
class AmplitudeVector:
    c00e: complex
    c01e: complex
    c02e: complex
    c10f: complex
    c11f: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.c00e, self.c01e, self.c02e, self.c10f, self.c11f], dtype=complex)

    @property
    def weak_probe_ok(self) -> bool:
        rest = sum(abs(c) ** 2 for c in (self.c01e, self.c02e, self.c10f, self.c11f))
        return abs(self.c00e) ** 2 > rest


def _generator(freqs: ComplexFrequencies, G_s: float, probe: float) -> np.ndarray:
    wl, wr, wq = freqs.left, freqs.right, freqs.qubit
    W, G = probe, G_s
    # basis order: 00e, 01e, 02e, 10f, 11f
    return np.array([
        [0, W, 0, 0, 0],
        [W, wr, SQRT2 * W, G, 0],
        [0, SQRT2 * W, 2 * wr, 0, SQRT2 * G],
        [0, G, 0, wl + wq, W],
        [0, 0, SQRT2 * G, W, wl + wq + wr],
    ], dtype=complex)


def amplitude_rhs(amplitudes: AmplitudeVector, freqs: ComplexFrequencies, G_s: float,
                  probe: float) -> np.ndarray:
    """i dC/dt for the five truncated amplitudes."""
    return _generator(freqs, G_s, probe) @ amplitudes.as_array()


def amplitude_steady_state(freqs: ComplexFrequencies, G_s: float, probe: float) -> AmplitudeVector:
    """Stationary amplitudes with C00e fixed to 1 (lowest-order weak-probe closure)."""
    if probe < 0:
        raise InvalidArgumentError("probe amplitude must be non-negative")
    if freqs.kappa_l == freqs.kappa_r == freqs.gamma_q == 0:
        raise InvalidArgumentError("the amplitude steady state needs at least one nonzero decay rate")
    if freqs.kappa_r > 0 and probe / freqs.kappa_r > WEAK_PROBE_RATIO:
        warnings.warn(f"probe/kappa_r = {probe / freqs.kappa_r:.3g} exceeds {WEAK_PROBE_RATIO}; "
                      "weak-probe closure is questionable", ModelWarning, stacklevel=2)
    M = _generator(freqs, G_s, probe)
    A = M[1:, 1:]
    b = -M[1:, 0]
    if np.linalg.cond(A) > 1e14:
        raise ResonanceDegeneracyError("amplitude equations are singular (degenerate resonance)")
    c = np.linalg.solve(A, b)
    out = AmplitudeVector(1.0 + 0j, *map(complex, c))
    if not out.weak_probe_ok:
        warnings.warn("ground amplitude does not dominate; outside the weak-probe regime",
                      ModelWarning, stacklevel=2)
    return out


def g2_analytic(amplitudes: AmplitudeVector, floor: float = AMPLITUDE_FLOOR) -> float:
    """2|C02e|^2 / |C01e|^4."""
    c01 = abs(amplitudes.c01e)
    if c01 <= floor:
        raise UndefinedCorrelationError(f"|C01e| = {c01:.3e} vanishes; g2 undefined")
    return 2 * abs(amplitudes.c02e) ** 2 / c01**4


def optimal_condition_residual(freqs: ComplexFrequencies, G_s: float, probe: float) -> complex:
    """G^2 + (w_l + w_q)(w_l + w_r + w_q) - W^2; zero means C02e = 0."""
    a = freqs.left + freqs.qubit
    return complex(G_s**2 + a * (a + freqs.right) - probe**2)


class OptimalRoot(NamedTuple):
    value: float
    imag_mismatch: float
    residual: complex


UNKNOWNS = ("omega_s_l", "omega_s_r", "omega_q")


def solve_optimal_frequency(freqs: ComplexFrequencies, unknown: str, G_s: float, probe: float,
                            max_mismatch: Optional[float] = None) -> list[OptimalRoot]:
    """Real frequencies for ``unknown`` that best satisfy the perfect-blockade condition.

    The condition is a complex polynomial (degree 1 in omega_s_r, 2 in
    omega_s_l or omega_q).  Its complex roots are computed; each reported
    value is a root's real part, with the root's imaginary part as
    ``imag_mismatch`` and the condition evaluated there as ``residual``.
    Roots with |imag_mismatch| > ``max_mismatch`` are dropped, so an empty
    list is the no-solution report.
    """
    if unknown not in UNKNOWNS:
        raise InvalidArgumentError(f"unknown must be one of {UNKNOWNS}, got {unknown!r}")
    base = replace(freqs, **{unknown: 0.0})
    wl, wr, wq = base.left, base.right, base.qubit
    c = G_s**2 - probe**2
    if unknown == "omega_s_r":
        # (wl + wq)(wl + wq + wr + x) + c
        a = wl + wq
        coeffs = [a, a * (a + wr) + c]
    else:
        # x enters both factors: (x + u)(x + v) + c
        u = wl + wq
        v = wl + wq + wr
        coeffs = [1.0, u + v, u * v + c]
    coeffs = np.array(coeffs, dtype=complex)
    if abs(coeffs[0]) == 0:
        return []
    roots = np.roots(coeffs)
    out = []
    for z in sorted(roots, key=lambda z: z.real):
        value = float(z.real)
        res = optimal_condition_residual(replace(freqs, **{unknown: value}), G_s, probe)
        if max_mismatch is not None and abs(z.imag) > max_mismatch:
            continue
        out.append(OptimalRoot(value, float(z.imag), res))
    return out
