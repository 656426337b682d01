"""Unitary, Lindblad and conditional (no-jump) time evolution; steady states.

Density matrices are vectorized row-major, so vec(A rho B) = (A kron B^T) vec(rho).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from . import hilbert as hs
from .errors import (AmbiguousSteadyStateError, IntegrationError, InvalidArgumentError,
                     InvalidModelError, SolverError, TruncationWarning)
from .model import LindbladTerm

log = logging.getLogger(__name__)

Observable = Union[hs.Operator, Callable[[hs.QuantumState], complex]]

RTOL = 1e-8
ATOL = 1e-10
# exact propagators when the Liouvillian (dimension N^2) is at most this large
EXPM_LIOUVILLIAN_LIMIT = 1024
POSITIVITY_ABORT = 1e-8


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    samples: int

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < 2:
            raise InvalidArgumentError("a time grid needs at least 2 samples")
        if not self.t1 > self.t0:
            raise InvalidArgumentError(f"t1 must exceed t0, got [{self.t0}, {self.t1}]")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, int(self.samples))

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / (self.samples - 1)


@dataclass
class Trajectory:
    times: np.ndarray
    records: dict[str, np.ndarray]
    states: Optional[list[hs.QuantumState]] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.records[name]

    def record(self, i: int) -> dict:
        return {k: v[i] for k, v in self.records.items()}


@dataclass(frozen=True)
class SteadyState:
    state: hs.QuantumState
    residual: float
    method: str
    iterations: int = 1


# ---------------------------------------------------------------- helpers

def _matrix(op):
    return op.tosparse() if isinstance(op, hs.Operator) else sp.csr_matrix(op)


def liouvillian(H: hs.Operator, terms: Sequence[LindbladTerm] = ()) -> sp.csr_matrix:
    """Sparse superoperator for -i[H, rho] + sum_k rate_k D[o_k](rho), D[o] = 2 o rho o^dag - {o^dag o, rho}."""
    n = H.space.total
    eye = sp.identity(n, dtype=complex, format="csr")
    h = _matrix(H)
    L = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for term in terms:
        if term.jump.space != H.space:
            raise InvalidArgumentError(f"jump operator {term.label!r} lives on a different space")
        if term.rate == 0:
            continue
        o = _matrix(term.jump)
        odo = (o.conj().T @ o).tocsr()
        L = L + term.rate * (2 * sp.kron(o, o.conj()) - sp.kron(eye, odo.T) - sp.kron(odo, eye))
    return L.tocsr()


def _evaluate(observables, state):
    out = {}
    for name, obs in observables.items():
        out[name] = hs.expect(obs, state) if isinstance(obs, hs.Operator) else obs(state)
    return out


def _collect(rows, names):
    records = {}
    for name in names:
        arr = np.array([r[name] for r in rows])
        if np.iscomplexobj(arr):
            scale = max(1.0, float(np.max(np.abs(arr.real), initial=0.0)))
            if np.max(np.abs(arr.imag), initial=0.0) <= 1e-10 * scale:
                arr = arr.real.copy()
        records[name] = arr
    return records


def _check_hermitian(H):
    err = H.hermiticity_error()
    scale = max(1.0, float(np.max(np.abs(H.toarray())))) if H.space.total <= 256 else max(1.0, H.norm())
    if err > 1e-12 * scale:
        raise InvalidArgumentError(
            f"Hamiltonian is not Hermitian (max |H - H^dag| = {err:.3e}); use evolve_conditional")


def _leakage_tracker(space, threshold):
    subsystems = space.fock_subsystems()
    maxima = {k: 0.0 for k in subsystems}

    def update(state):
        for k in subsystems:
            p = hs.top_level_population(state, k)
            maxima[k] = max(maxima[k], p)

    def finish(meta):
        meta["leakage_max"] = dict(maxima)
        worst = max(maxima.values(), default=0.0)
        if worst > threshold:
            warnings.warn(f"truncation leakage {worst:.3e} exceeds {threshold:.1e}", TruncationWarning,
                          stacklevel=3)
    return update, finish


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())


# ---------------------------------------------------------------- closed systems

def evolve_schrodinger(H: hs.Operator, psi0: hs.QuantumState, grid: TimeGrid,
                       observables: Mapping[str, Observable] | None = None, *,
                       store_states: bool = False,
                       leakage_threshold: float = hs.LEAKAGE_THRESHOLD) -> Trajectory:
    """Exact propagation of a pure state under a Hermitian Hamiltonian."""
    observables = dict(observables or {})
    if psi0.kind != "pure":
        raise InvalidArgumentError("evolve_schrodinger needs a pure initial state")
    if H.space != psi0.space:
        raise InvalidArgumentError("Hamiltonian and state live on different spaces")
    _check_hermitian(H)
    psi0.validate()
    times = grid.times
    n = H.space.total
    if n <= hs.DENSE_LIMIT:
        energies, vecs = np.linalg.eigh(H.toarray())
        coeffs = vecs.conj().T @ psi0.data
        phases = np.exp(-1j * np.outer(times - grid.t0, energies))
        psis = (phases * coeffs) @ vecs.T
    else:
        psis = spla.expm_multiply(-1j * H.tosparse(), psi0.data, start=0.0,
                                  stop=grid.t1 - grid.t0, num=grid.samples, endpoint=True)
    update, finish = _leakage_tracker(H.space, leakage_threshold)
    rows, states, norm_err = [], [], 0.0
    for psi in psis:
        state = hs.QuantumState(H.space, psi)
        norm_err = max(norm_err, abs(np.linalg.norm(psi) - 1))
        rows.append(_evaluate(observables, state))
        update(state)
        if store_states:
            states.append(state)
    if norm_err > 1e-8:
        raise IntegrationError(f"norm drift {norm_err:.3e} exceeds 1e-8")
    meta = {"method": "eigendecomposition" if n <= hs.DENSE_LIMIT else "expm_multiply",
            "max_norm_error": norm_err}
    finish(meta)
    return Trajectory(times, _collect(rows, observables), states if store_states else None, meta)


# ---------------------------------------------------------------- open systems

def _rk4(L, y0, times, substeps):
    out = [y0]
    y = y0
    for a, b in zip(times[:-1], times[1:]):
        h = (b - a) / substeps
        for _ in range(substeps):
            k1 = L @ y
            k2 = L @ (y + 0.5 * h * k1)
            k3 = L @ (y + 0.5 * h * k2)
            k4 = L @ (y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    return np.array(out)


def evolve_master(H: hs.Operator, terms: Sequence[LindbladTerm], rho0: hs.QuantumState,
                  grid: TimeGrid, observables: Mapping[str, Observable] | None = None, *,
                  method: str = "auto", rtol: float = RTOL, atol: float = ATOL,
                  substeps: int = 10, store_states: bool = False,
                  leakage_threshold: float = hs.LEAKAGE_THRESHOLD) -> Trajectory:
    """Lindblad evolution of a density matrix.

    method: ``"expm"`` (exact propagator over one grid step), ``"adaptive"``
    (DOP853 with ``rtol``/``atol``), ``"rk4"`` (fixed-step classical RK4,
    ``substeps`` per grid interval) or ``"auto"``.
    """
    observables = dict(observables or {})
    if H.space != rho0.space:
        raise InvalidArgumentError("Hamiltonian and state live on different spaces")
    _check_hermitian(H)
    rho0 = rho0.to_mixed()
    rho0.validate()
    n = H.space.total
    L = liouvillian(H, terms)
    if method == "auto":
        method = "expm" if n * n <= EXPM_LIOUVILLIAN_LIMIT else "adaptive"
    times = grid.times
    y0 = rho0.data.reshape(-1)
    if method == "expm":
        prop = sla.expm(L.toarray() * grid.step)
        ys = [y0]
        for _ in range(grid.samples - 1):
            ys.append(prop @ ys[-1])
        ys = np.array(ys)
    elif method == "adaptive":
        sol = solve_ivp(lambda t, y: L @ y, (times[0], times[-1]), y0.astype(complex),
                        method="DOP853", t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationError(f"adaptive integrator failed: {sol.message} "
                                   f"(t reached {sol.t[-1] if sol.t.size else times[0]:.6g}, nfev={sol.nfev})")
        ys = sol.y.T
    elif method == "rk4":
        ys = _rk4(L, y0.astype(complex), times, int(substeps))
    else:
        raise InvalidArgumentError(f"unknown integration method {method!r}")

    update, finish = _leakage_tracker(H.space, leakage_threshold)
    rows, states = [], []
    trace_err = herm_err = 0.0
    min_eig = np.inf
    for t, y in zip(times, ys):
        rho = y.reshape(n, n)
        trace_err = max(trace_err, abs(np.trace(rho) - 1))
        herm_err = max(herm_err, float(np.max(np.abs(rho - rho.conj().T))))
        lam = min_eigenvalue(rho)
        min_eig = min(min_eig, lam)
        if lam < -POSITIVITY_ABORT:
            raise IntegrationError(f"density matrix lost positivity at t={t:.6g} (eigenvalue {lam:.3e})")
        state = hs.QuantumState(H.space, 0.5 * (rho + rho.conj().T))
        rows.append(_evaluate(observables, state))
        update(state)
        if store_states:
            states.append(state)
    if trace_err > 1e-8:
        raise IntegrationError(f"trace drift {trace_err:.3e} exceeds 1e-8")
    meta = {"method": method, "max_trace_error": float(trace_err), "max_hermiticity_error": herm_err,
            "min_eigenvalue": float(min_eig), "positivity_flag": bool(min_eig < 0),
            "rtol": rtol, "atol": atol}
    finish(meta)
    return Trajectory(times, _collect(rows, observables), states if store_states else None, meta)


def evolve_conditional(H_con: hs.Operator, psi0: hs.QuantumState, grid: TimeGrid,
                       observables: Mapping[str, Observable] | None = None, *,
                       renormalize: bool = False, store_states: bool = False) -> Trajectory:
    """Pure-state evolution under a non-Hermitian no-jump Hamiltonian.

    The squared norm is recorded as ``"norm"``.  Observables see the
    unnormalized state unless ``renormalize`` is set; stored states are
    always unnormalized.
    """
    observables = dict(observables or {})
    if psi0.kind != "pure":
        raise InvalidArgumentError("evolve_conditional needs a pure initial state")
    m = H_con.toarray()
    gain = np.linalg.eigvalsh((m - m.conj().T) / 2j)
    scale = max(1.0, float(np.max(np.abs(m))))
    if gain.max() > 1e-12 * scale:
        raise InvalidModelError(f"conditional Hamiltonian amplifies the norm (anti-Hermitian eigenvalue {gain.max():.3e})")
    times = grid.times
    if H_con.space.total <= hs.DENSE_LIMIT:
        prop = sla.expm(-1j * m * grid.step)
        psis = [psi0.data]
        for _ in range(grid.samples - 1):
            psis.append(prop @ psis[-1])
    else:
        psis = spla.expm_multiply(-1j * H_con.tosparse(), psi0.data, start=0.0,
                                  stop=grid.t1 - grid.t0, num=grid.samples, endpoint=True)
    rows, states, norms = [], [], []
    for psi in psis:
        nrm = float(np.vdot(psi, psi).real)
        norms.append(nrm)
        state = hs.QuantumState(H_con.space, psi)
        shown = hs.QuantumState(H_con.space, psi / np.sqrt(nrm)) if renormalize and nrm > 0 else state
        row = _evaluate(observables, shown)
        row["norm"] = nrm
        rows.append(row)
        if store_states:
            states.append(state)
    norms = np.array(norms)
    if np.any(np.diff(norms) > 1e-12 * max(1.0, norms[0])):
        raise InvalidModelError("norm increased during conditional evolution")
    names = list(observables) + ["norm"]
    return Trajectory(times, _collect(rows, names), states if store_states else None,
                      {"method": "conditional", "renormalized": renormalize})


# ---------------------------------------------------------------- steady states

def excitation_weights(space: hs.SpaceDescriptor, epsilon: float,
                       subsystems: Sequence[int] | None = None) -> np.ndarray:
    """Basis weights epsilon**(total boson number) for scaling weakly driven steady states."""
    if subsystems is None:
        subsystems = space.fock_subsystems()
    grids = np.indices(space.subsystem_dims).reshape(space.n_subsystems, -1)
    counts = sum(grids[k] for k in subsystems)
    return float(epsilon) ** counts.astype(float)


def _null_dimension(L: sp.spmatrix) -> int:
    if L.shape[0] > 4096:
        return -1
    s = np.linalg.svd(L.toarray(), compute_uv=False)
    return int(np.sum(s <= 1e-10 * s.max()))


def _residual(L, vec):
    scale = float(abs(L).max()) or 1.0
    return float(np.linalg.norm(L @ vec)) / scale


def steady_state(H: hs.Operator, terms: Sequence[LindbladTerm], method: str = "null-space", *,
                 weights: np.ndarray | None = None, tol: float | None = None,
                 max_iterations: int = 5000) -> SteadyState:
    """Stationary density matrix of the Lindblad generator.

    ``"null-space"`` solves L rho = 0 with one row replaced by the trace
    condition; ``"time-marching"`` runs implicit-Euler steps sized from the
    slowest rate until the state stops changing.  ``weights`` (e.g. from
    excitation_weights) rescale rho_ij -> rho_ij / (w_i w_j) before solving,
    which keeps tiny multi-excitation elements resolvable.  The returned
    residual is ||L vec(rho)|| divided by the largest |L| entry.
    """
    if method not in ("null-space", "time-marching"):
        raise InvalidArgumentError(f"unknown steady-state method {method!r}")
    rates = [t.rate for t in terms if t.rate > 0]
    if not rates:
        raise InvalidArgumentError("steady_state needs at least one nonzero dissipation rate")
    n = H.space.total
    L = liouvillian(H, terms).tocsc()
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,) or np.any(w <= 0):
        raise InvalidArgumentError("weights must be a positive vector over the basis")
    d = np.kron(w, w)
    Ls = (sp.diags(1 / d) @ L @ sp.diags(d)).tocsc()
    diag_idx = np.arange(n) * (n + 1)
    trace_row = sp.csr_matrix((w**2, (np.zeros(n, dtype=int), diag_idx)), shape=(1, n * n))

    if method == "null-space":
        tol = 1e-10 if tol is None else tol
        A = sp.vstack([trace_row, Ls[1:, :]]).tocsc()
        b = np.zeros(n * n, dtype=complex)
        b[0] = 1.0
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            dim = _null_dimension(L)
            raise AmbiguousSteadyStateError(
                f"Liouvillian null space is degenerate (dimension {dim}): {exc}", dim) from exc
        iterations = 1
    else:
        tol = 1e-8 if tol is None else tol
        h = 2.0 / min(rates)
        eye = sp.identity(n * n, dtype=complex, format="csc")
        # start from diag(w^2): unit entries in the scaled coordinates
        x = np.eye(n, dtype=complex).reshape(-1) / np.sum(w**2)
        lu = spla.splu((eye - h * Ls).tocsc())
        iterations = 0
        for iterations in range(1, max_iterations + 1):
            nxt = lu.solve(x)
            # exact steps keep the trace; restore it against rounding at very long steps
            nxt = nxt / (trace_row @ nxt)[0]
            change = np.max(np.abs(nxt - x)) / max(np.max(np.abs(nxt)), 1e-300)
            x = nxt
            if change < 1e-15:
                break
            if iterations % 50 == 0:
                # pseudo-transient continuation: lengthen the step when convergence stalls
                h *= 10
                lu = spla.splu((eye - h * Ls).tocsc())
        else:
            raise SolverError(f"time-marching did not converge in {max_iterations} steps")

    rho = (x * d).reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if not np.isfinite(tr) or tr == 0:
        dim = _null_dimension(L)
        raise AmbiguousSteadyStateError(f"steady-state solve produced trace {tr} (null dimension {dim})", dim)
    rho = rho / tr
    residual = _residual(L, rho.reshape(-1))
    if residual > tol:
        dim = _null_dimension(L)
        if dim > 1:
            raise AmbiguousSteadyStateError(f"steady state is not unique (null-space dimension {dim})", dim)
        raise SolverError(f"steady-state residual {residual:.3e} exceeds {tol:.1e} ({method})")
    lam = min_eigenvalue(rho)
    if lam < -POSITIVITY_ABORT:
        dim = _null_dimension(L)
        if dim > 1:
            raise AmbiguousSteadyStateError(f"steady state is not unique (null-space dimension {dim})", dim)
        raise SolverError(f"steady state has negative eigenvalue {lam:.3e}")
    return SteadyState(hs.QuantumState(H.space, rho), residual, method, iterations)
