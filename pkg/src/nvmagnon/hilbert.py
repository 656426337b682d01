"""Truncated composite Hilbert spaces, operators and tensor-structure tools.

Subsystem order is fixed project-wide as (left mode, right mode, spin).  Spin
levels are labelled g=0, e=1, f=2 for the NV qutrit and e=0, f=1 for the
effective qubit.
"""
from __future__ import annotations

import math
import string
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgumentError, TruncationWarning

# Operators on spaces smaller than this are stored dense.
DENSE_LIMIT = 64
LEAKAGE_THRESHOLD = 1e-4


@dataclass(frozen=True)
class SpaceDescriptor:
    subsystem_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(self.subsystem_dims)
        if not dims:
            raise InvalidArgumentError("a space needs at least one subsystem")
        for d in dims:
            if int(d) != d or d < 1:
                raise InvalidArgumentError(f"subsystem dimension must be a positive integer, got {d!r}")
        object.__setattr__(self, "subsystem_dims", tuple(int(d) for d in dims))

    @property
    def total(self) -> int:
        return math.prod(self.subsystem_dims)

    @property
    def n_subsystems(self) -> int:
        return len(self.subsystem_dims)

    def check_index(self, subsystem: int) -> int:
        if not isinstance(subsystem, (int, np.integer)) or not 0 <= subsystem < self.n_subsystems:
            raise InvalidArgumentError(
                f"subsystem index {subsystem!r} out of range for {self.n_subsystems} subsystems")
        return int(subsystem)

    def index_of(self, levels: Sequence[int]) -> int:
        """Flat basis index of the product state |levels[0], levels[1], ...>."""
        if len(levels) != self.n_subsystems:
            raise InvalidArgumentError(f"expected {self.n_subsystems} levels, got {len(levels)}")
        for lvl, d in zip(levels, self.subsystem_dims):
            if not 0 <= lvl < d:
                raise InvalidArgumentError(f"level {lvl} outside dimension {d}")
        return int(np.ravel_multi_index(tuple(levels), self.subsystem_dims))

    def fock_subsystems(self) -> tuple[int, ...]:
        # (l, r, spin) convention: every factor but the last is a bosonic mode
        if self.n_subsystems == 1:
            return (0,)
        return tuple(range(self.n_subsystems - 1))


def make_space(subsystem_dims: Iterable[int]) -> SpaceDescriptor:
    return SpaceDescriptor(tuple(subsystem_dims))


def _store(matrix, total):
    if total < DENSE_LIMIT:
        m = matrix.toarray() if sp.issparse(matrix) else np.array(matrix, dtype=complex)
        m = m.astype(complex, copy=False)
        m.flags.writeable = False
        return m
    return sp.csr_matrix(matrix, dtype=complex)


class Operator:
    """Complex matrix tied to a SpaceDescriptor.

    Dense below ``DENSE_LIMIT`` total dimension, CSR above.  Instances are
    treated as immutable; arithmetic returns new operators.
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: SpaceDescriptor, matrix):
        shape = matrix.shape
        if shape != (space.total, space.total):
            raise InvalidArgumentError(f"matrix shape {shape} does not match space dimension {space.total}")
        self.space = space
        self.matrix = _store(matrix, space.total)

    def __repr__(self):
        kind = "sparse" if sp.issparse(self.matrix) else "dense"
        return f"Operator(dims={self.space.subsystem_dims}, {kind})"

    def toarray(self) -> np.ndarray:
        if sp.issparse(self.matrix):
            return self.matrix.toarray()
        return np.array(self.matrix)

    def tosparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    adjoint = dag

    def _check(self, other):
        if not isinstance(other, Operator):
            return NotImplemented
        if other.space != self.space:
            raise InvalidArgumentError("operators live on different spaces")
        return other

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            return self @ scalar
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.space, self.matrix / scalar)

    def __matmul__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return Operator(self.space, self.matrix @ other.matrix)

    def element(self, bra: Sequence[int], ket: Sequence[int]) -> complex:
        """<bra|O|ket> for product basis labels."""
        i = self.space.index_of(bra)
        j = self.space.index_of(ket)
        return complex(self.matrix[i, j])

    def hermiticity_error(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        if sp.issparse(diff):
            return float(abs(diff).max()) if diff.nnz else 0.0
        return float(np.max(np.abs(diff))) if diff.size else 0.0

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_error() <= tol

    def norm(self) -> float:
        """Frobenius norm."""
        if sp.issparse(self.matrix):
            return float(sp.linalg.norm(self.matrix))
        return float(np.linalg.norm(self.matrix))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def _embed(space: SpaceDescriptor, subsystem: int, local) -> Operator:
    subsystem = space.check_index(subsystem)
    out = sp.identity(1, dtype=complex, format="csr")
    for k, d in enumerate(space.subsystem_dims):
        factor = sp.csr_matrix(local) if k == subsystem else sp.identity(d, dtype=complex, format="csr")
        out = sp.kron(out, factor, format="csr")
    return Operator(space, out)


def identity(space: SpaceDescriptor) -> Operator:
    return Operator(space, sp.identity(space.total, dtype=complex, format="csr"))


def zero_op(space: SpaceDescriptor) -> Operator:
    return Operator(space, sp.csr_matrix((space.total, space.total), dtype=complex))


def lowering_op(space: SpaceDescriptor, subsystem: int) -> Operator:
    """Bosonic annihilation operator on one factor, identity elsewhere."""
    d = space.subsystem_dims[space.check_index(subsystem)]
    local = sp.diags(np.sqrt(np.arange(1, d, dtype=float)), offsets=1, shape=(d, d))
    return _embed(space, subsystem, local)


def raising_op(space: SpaceDescriptor, subsystem: int) -> Operator:
    return lowering_op(space, subsystem).dag()


def number_op(space: SpaceDescriptor, subsystem: int) -> Operator:
    d = space.subsystem_dims[space.check_index(subsystem)]
    return _embed(space, subsystem, sp.diags(np.arange(d, dtype=float)))


def spin_op(space: SpaceDescriptor, subsystem: int, kind: str, levels: Sequence[int] = ()) -> Operator:
    """Embedded spin operator.

    kind:
      ``"transition"`` with ``levels=(row, col)`` gives |row><col|,
      ``"projector"`` with ``levels=(level,)`` gives |level><level|,
      ``"sigma_z"`` gives |top><top| - |top-1><top-1| (|f><f| - |e><e| for
      both the qubit and the qutrit labelling).
    """
    d = space.subsystem_dims[space.check_index(subsystem)]

    def _lvl(x):
        if not isinstance(x, (int, np.integer)) or not 0 <= x < d:
            raise InvalidArgumentError(f"level {x!r} outside spin dimension {d}")
        return int(x)

    local = sp.lil_matrix((d, d), dtype=complex)
    if kind == "transition":
        if len(levels) != 2:
            raise InvalidArgumentError("transition needs (row, col) levels")
        local[_lvl(levels[0]), _lvl(levels[1])] = 1.0
    elif kind == "projector":
        if len(levels) != 1:
            raise InvalidArgumentError("projector needs exactly one level")
        lvl = _lvl(levels[0])
        local[lvl, lvl] = 1.0
    elif kind == "sigma_z":
        if d < 2:
            raise InvalidArgumentError("sigma_z needs at least two levels")
        local[d - 1, d - 1] = 1.0
        local[d - 2, d - 2] = -1.0
    else:
        raise InvalidArgumentError(f"unknown spin operator kind {kind!r}")
    return _embed(space, subsystem, local)


class QuantumState:
    """Pure (vector) or mixed (density matrix) state on a SpaceDescriptor."""

    __slots__ = ("space", "data")

    def __init__(self, space: SpaceDescriptor, data):
        data = np.asarray(data, dtype=complex)
        n = space.total
        if data.ndim == 1:
            if data.shape != (n,):
                raise InvalidArgumentError(f"state vector length {data.shape[0]} != {n}")
        elif data.ndim == 2:
            if data.shape != (n, n):
                raise InvalidArgumentError(f"density matrix shape {data.shape} != {(n, n)}")
        else:
            raise InvalidArgumentError("state data must be a vector or a square matrix")
        data = data.copy()
        data.flags.writeable = False
        self.space = space
        self.data = data

    def __repr__(self):
        return f"QuantumState(dims={self.space.subsystem_dims}, kind={self.kind})"

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    def density(self) -> np.ndarray:
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def to_mixed(self) -> "QuantumState":
        return self if self.kind == "mixed" else QuantumState(self.space, self.density())

    def norm(self) -> float:
        """Vector norm for pure states, trace for mixed ones."""
        if self.kind == "pure":
            return float(np.linalg.norm(self.data))
        return float(np.real(np.trace(self.data)))

    def normalized(self) -> "QuantumState":
        n = self.norm()
        if n == 0:
            raise InvalidArgumentError("cannot normalize a zero state")
        return QuantumState(self.space, self.data / n)

    def validate(self, tol: float = 1e-10) -> None:
        if self.kind == "pure":
            if abs(self.norm() - 1) > tol:
                raise InvalidArgumentError(f"pure state norm {self.norm()} differs from 1")
            return
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T), initial=0.0) > 1e-12:
            raise InvalidArgumentError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > tol:
            raise InvalidArgumentError(f"density matrix trace {np.trace(rho).real} differs from 1")
        if np.linalg.eigvalsh(rho).min() < -tol:
            raise InvalidArgumentError("density matrix has negative eigenvalues")


def basis_state(space: SpaceDescriptor, levels: Sequence[int]) -> QuantumState:
    vec = np.zeros(space.total, dtype=complex)
    vec[space.index_of(levels)] = 1.0
    return QuantumState(space, vec)


def pure_state(space: SpaceDescriptor, vector, normalize: bool = True) -> QuantumState:
    vec = np.asarray(vector, dtype=complex).ravel()
    if normalize:
        vec = vec / np.linalg.norm(vec)
    return QuantumState(space, vec)


def mixed_state(space: SpaceDescriptor, matrix) -> QuantumState:
    return QuantumState(space, np.asarray(matrix, dtype=complex))


def expect(op: Operator, state: QuantumState) -> complex:
    """<psi|O|psi> or Tr(O rho), without normalizing the state."""
    if op.space != state.space:
        raise InvalidArgumentError("operator and state live on different spaces")
    if state.kind == "pure":
        return complex(np.vdot(state.data, op.matrix @ state.data))
    return complex(np.sum(op.matrix.T.multiply(state.data)) if sp.issparse(op.matrix)
                   else np.sum(op.matrix.T * state.data))


def _letters(n):
    return string.ascii_letters[:n]


def partial_trace(state: QuantumState, keep: Iterable[int]) -> QuantumState:
    """Reduced density matrix on the ``keep`` subsystems (kept in ascending order)."""
    space = state.space
    keep = sorted({space.check_index(k) for k in keep})
    if not keep:
        raise InvalidArgumentError("partial_trace needs a non-empty keep set")
    dims = space.subsystem_dims
    n = len(dims)
    reduced = SpaceDescriptor(tuple(dims[k] for k in keep))
    if state.kind == "pure":
        psi = state.data.reshape(dims)
        a = _letters(n)
        b = "".join(a[k] if k not in keep else a[k].upper() for k in range(n))
        out = "".join(a[k] for k in keep) + "".join(a[k].upper() for k in keep)
        rho = np.einsum(f"{a},{b}->{out}", psi, psi.conj())
    else:
        rho_t = state.data.reshape(dims + dims)
        rows = _letters(n)
        cols = "".join(rows[k] if k not in keep else rows[k].upper() for k in range(n))
        out = "".join(rows[k] for k in keep) + "".join(rows[k].upper() for k in keep)
        rho = np.einsum(f"{rows}{cols}->{out}", rho_t)
    m = reduced.total
    return QuantumState(reduced, rho.reshape(m, m))


def partial_transpose(state: QuantumState, subsystem: int) -> np.ndarray:
    """Density matrix with the transpose taken on one tensor factor only."""
    space = state.space
    subsystem = space.check_index(subsystem)
    dims = space.subsystem_dims
    n = len(dims)
    rho = state.density().reshape(dims + dims)
    rho = np.swapaxes(rho, subsystem, n + subsystem)
    return rho.reshape(space.total, space.total)


def trace_norm(matrix) -> float:
    """Sum of singular values."""
    m = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"trace norm needs a square matrix, got shape {m.shape}")
    if np.allclose(m, m.conj().T, rtol=0, atol=1e-13):
        return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))))
    return float(np.sum(np.linalg.svd(m, compute_uv=False)))


def top_level_population(state: QuantumState, subsystem: int) -> float:
    d = state.space.subsystem_dims[state.space.check_index(subsystem)]
    proj = _embed(state.space, subsystem, sp.csr_matrix(([1.0], ([d - 1], [d - 1])), shape=(d, d)))
    pop = expect(proj, state).real
    return pop / state.norm() ** (2 if state.kind == "pure" else 1)


def check_leakage(state: QuantumState, subsystems: Iterable[int] | None = None,
                  threshold: float = LEAKAGE_THRESHOLD) -> dict[int, float]:
    """Top-Fock-level populations; warns when any exceeds ``threshold``."""
    if subsystems is None:
        subsystems = state.space.fock_subsystems()
    pops = {k: top_level_population(state, k) for k in subsystems}
    for k, p in pops.items():
        if p > threshold:
            warnings.warn(f"truncation leakage: subsystem {k} top-level population {p:.3e} > {threshold:.1e}",
                          TruncationWarning, stacklevel=2)
    return pops
