"""Observables and tripartite entanglement measures on (Fock, Fock, qubit) spaces."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import hilbert as hs
from .errors import InvalidArgumentError, ProjectionError, UndefinedCorrelationError
from .model import MODE_INDEX, QUBIT_E, QUBIT_F

G2_FLOOR = 1e-14
PROJECTION_TOLERANCE = 1e-6
CLIP_LIMIT = 1e-8


def _check_qubit_space(space: hs.SpaceDescriptor, what: str) -> None:
    dims = space.subsystem_dims
    if len(dims) != 3 or dims[2] != 2:
        raise InvalidArgumentError(f"{what} needs a (Fock, Fock, 2) space, got {dims}")


class Occupations(NamedTuple):
    n_l: float
    n_r: float
    qubit: float


def occupation_operators(space: hs.SpaceDescriptor) -> dict[str, hs.Operator]:
    _check_qubit_space(space, "occupations")
    return {"n_l": hs.number_op(space, 0), "n_r": hs.number_op(space, 1),
            "qubit": hs.spin_op(space, 2, "projector", (QUBIT_F,))}


def occupations(state: hs.QuantumState) -> Occupations:
    """<m_l^dag m_l>, <m_r^dag m_r>, <sigma_+ sigma_->."""
    ops = occupation_operators(state.space)
    return Occupations(*(hs.expect(ops[k], state).real for k in ("n_l", "n_r", "qubit")))


def _mode(mode) -> int:
    if isinstance(mode, str):
        if mode not in MODE_INDEX:
            raise InvalidArgumentError(f"mode must be 'l' or 'r', got {mode!r}")
        return MODE_INDEX[mode]
    return int(mode)


def g2_zero(rho: hs.QuantumState, mode="r", floor: float = G2_FLOOR) -> float:
    """Equal-time second-order correlation <a^dag a^dag a a> / <a^dag a>^2."""
    idx = rho.space.check_index(_mode(mode))
    a = hs.lowering_op(rho.space, idx)
    n = hs.expect(a.dag() @ a, rho).real
    if n <= floor:
        raise UndefinedCorrelationError(f"<n> = {n:.3e} is below the floor {floor:.1e}")
    nn = hs.expect(a.dag() @ a.dag() @ a @ a, rho).real
    return max(nn, 0.0) / n**2


def ghz_vector(space: hs.SpaceDescriptor) -> np.ndarray:
    _check_qubit_space(space, "ghz_fidelity")
    vec = np.zeros(space.total, dtype=complex)
    vec[space.index_of((1, 0, QUBIT_F))] = 1 / np.sqrt(2)
    vec[space.index_of((0, 1, QUBIT_E))] = 1 / np.sqrt(2)
    return vec


def ghz_fidelity(rho: hs.QuantumState) -> float:
    """<GHZ|rho|GHZ> with |GHZ> = (|1,0,f> + |0,1,e>)/sqrt(2)."""
    ghz = ghz_vector(rho.space)
    if rho.kind == "pure":
        return float(abs(np.vdot(ghz, rho.data)) ** 2)
    return float(np.vdot(ghz, rho.data @ ghz).real)


# ---------------------------------------------------------------- three-tangle

@dataclass(frozen=True)
class TangleCoefficients:
    d1: complex
    d2: complex
    d3: complex

    @property
    def tangle(self) -> float:
        return float(4 * abs(self.d1 - 2 * self.d2 + 4 * self.d3))


def tangle_coefficients(a: np.ndarray) -> TangleCoefficients:
    """Hyperdeterminant pieces of a three-qubit amplitude tensor a[i, j, k]."""
    a = np.asarray(a, dtype=complex).reshape(2, 2, 2)
    d1 = (a[0, 0, 0] ** 2 * a[1, 1, 1] ** 2 + a[0, 0, 1] ** 2 * a[1, 1, 0] ** 2
          + a[0, 1, 0] ** 2 * a[1, 0, 1] ** 2 + a[1, 0, 0] ** 2 * a[0, 1, 1] ** 2)
    d2 = (a[0, 0, 0] * a[1, 1, 1] * (a[0, 1, 1] * a[1, 0, 0] + a[1, 0, 1] * a[0, 1, 0]
                                     + a[1, 1, 0] * a[0, 0, 1])
          + a[0, 1, 1] * a[1, 0, 0] * a[1, 0, 1] * a[0, 1, 0]
          + a[0, 1, 1] * a[1, 0, 0] * a[1, 1, 0] * a[0, 0, 1]
          + a[1, 0, 1] * a[0, 1, 0] * a[1, 1, 0] * a[0, 0, 1])
    d3 = (a[0, 0, 0] * a[1, 1, 0] * a[1, 0, 1] * a[0, 1, 1]
          + a[1, 1, 1] * a[0, 0, 1] * a[0, 1, 0] * a[1, 0, 0])
    return TangleCoefficients(complex(d1), complex(d2), complex(d3))


def project_to_qubits(psi: hs.QuantumState) -> tuple[np.ndarray, float]:
    """Amplitudes on Fock levels {0, 1} of each mode times the qubit, and the kept weight fraction."""
    if psi.kind != "pure":
        raise InvalidArgumentError("the residual tangle is defined here for pure states only")
    dims = psi.space.subsystem_dims
    if len(dims) != 3 or min(dims) < 2:
        raise InvalidArgumentError(f"need three factors of dimension >= 2, got {dims}")
    full = psi.data.reshape(dims)
    sub = full[:2, :2, :2]
    total = float(np.vdot(psi.data, psi.data).real)
    if total == 0:
        raise InvalidArgumentError("zero state")
    return sub.copy(), float(np.vdot(sub, sub).real) / total


def residual_tangle(psi: hs.QuantumState, normalize: bool = True) -> float:
    """Three-tangle 4|d1 - 2 d2 + 4 d3| of the projected 2x2x2 state.

    With ``normalize=False`` the raw amplitudes are used, so a decaying
    (unnormalized) conditional state yields a correspondingly damped tangle.
    """
    sub, weight = project_to_qubits(psi)
    if weight < 1 - PROJECTION_TOLERANCE:
        raise ProjectionError(f"only {weight:.8f} of the weight lies in the two-level subspace")
    if normalize:
        sub = sub / np.sqrt(np.vdot(sub, sub).real)
    return tangle_coefficients(sub).tangle


def residual_tangle_closed_form(G_s: float, detuning: float, t):
    """Analytic three-tangle of the exchange dynamics started from |1,0,f>."""
    if G_s <= 0:
        raise InvalidArgumentError("G_s must be positive")
    t = np.asarray(t, dtype=float)
    omega = np.sqrt(G_s**2 + detuning**2 / 4)
    s2 = np.sin(omega * t) ** 2
    c2 = np.cos(omega * t) ** 2
    tau = 4 * G_s**2 / omega**2 * (c2 + detuning**2 / (4 * omega**2) * s2) * s2
    return float(tau) if tau.ndim == 0 else tau


# ---------------------------------------------------------------- contangle

def _log_neg_sq(state: hs.QuantumState, subsystem: int, base: float) -> float:
    value = np.log(hs.trace_norm(hs.partial_transpose(state, subsystem))) / np.log(base)
    return float(max(value, 0.0) ** 2)


@dataclass(frozen=True)
class ContangleResult:
    value: float
    residuals: dict
    clipped: bool
    base: float = 2.0


def clip_for_measurement(rho: np.ndarray) -> np.ndarray:
    """Zero small negative eigenvalues (>= -1e-8); larger violations are errors."""
    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if vals.min() >= 0:
        return rho
    if vals.min() < -CLIP_LIMIT:
        raise InvalidArgumentError(f"density matrix eigenvalue {vals.min():.3e} is too negative to clip")
    vals = np.clip(vals, 0, None)
    return (vecs * vals) @ vecs.conj().T


def contangle_analysis(rho: hs.QuantumState, base: float = 2.0, normalize: bool = True) -> ContangleResult:
    """Residual contangle for each focus subsystem.

    The state is scaled to unit trace first unless ``normalize`` is false, in which case
    a sub-normalized (conditional) state is used as is and its trace norms shrink with it.
    """
    space = rho.space
    if space.n_subsystems != 3:
        raise InvalidArgumentError(f"contangle needs a three-factor space, got {space.subsystem_dims}")
    mat = rho.density()
    tr = np.trace(mat).real
    if tr <= 0:
        raise InvalidArgumentError("state has zero trace")
    state = hs.QuantumState(space, tr * clip_for_measurement(mat / tr) if not normalize
                            else clip_for_measurement(mat / tr))
    residuals = {}
    for focus in range(3):
        others = [k for k in range(3) if k != focus]
        whole = _log_neg_sq(state, focus, base)
        pairs = 0.0
        for other in others:
            reduced = hs.partial_trace(state, [focus, other])
            pos = sorted([focus, other]).index(focus)
            pairs += _log_neg_sq(reduced, pos, base)
        residuals[focus] = whole - pairs
    raw = min(residuals.values())
    return ContangleResult(max(raw, 0.0), residuals, raw < 0, base)


def min_residual_contangle(rho: hs.QuantumState, base: float = 2.0) -> float:
    """Minimum over focus subsystems of E(A|BC) - E(A|B) - E(A|C), E = (log ||rho^T_A||_1)^2.

    Negative minima are clipped to zero (see contangle_analysis for the flag).
    """
    return contangle_analysis(rho, base).value
