import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from nvmagnon import hilbert as hs
from nvmagnon import measures as ms
from nvmagnon.errors import InvalidArgumentError, ProjectionError, UndefinedCorrelationError

QUBITS = hs.make_space((2, 2, 2))


def amps(entries):
    a = np.zeros((2, 2, 2), dtype=complex)
    for idx, v in entries.items():
        a[idx] = v
    return a / np.linalg.norm(a)


GHZ = amps({(0, 0, 0): 1, (1, 1, 1): 1})
W = amps({(0, 0, 1): 1, (0, 1, 0): 1, (1, 0, 0): 1})


def test_tangle_reference_states():
    assert ms.tangle_coefficients(GHZ).tangle == pytest.approx(1.0)
    assert ms.tangle_coefficients(W).tangle == pytest.approx(0.0, abs=1e-15)
    prod = np.einsum("i,j,k->ijk", [0.6, 0.8], [1, 1j] / np.sqrt(2), [0.28, 0.96])
    assert ms.tangle_coefficients(prod).tangle == pytest.approx(0.0, abs=1e-15)
    # biseparable: Bell pair times a qubit
    bell = np.einsum("ij,k->ijk", np.eye(2) / np.sqrt(2), [1, 0])
    assert ms.tangle_coefficients(bell).tangle == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tangle_local_unitary_and_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
    a /= np.linalg.norm(a)
    tau = ms.tangle_coefficients(a).tangle
    assert 0 <= tau <= 1 + 1e-12
    u = [unitary_group.rvs(2, random_state=rng) for _ in range(3)]
    b = np.einsum("ai,bj,ck,ijk->abc", *u, a)
    assert ms.tangle_coefficients(b).tangle == pytest.approx(tau, abs=1e-12)
    assert ms.tangle_coefficients(a.transpose(2, 0, 1)).tangle == pytest.approx(tau, abs=1e-12)
    assert ms.tangle_coefficients(np.exp(0.7j) * a).tangle == pytest.approx(tau, abs=1e-12)


def test_residual_tangle_on_fock_qubit_space():
    space = hs.make_space((3, 3, 2))
    ghz_like = hs.pure_state(space, ms.ghz_vector(space))
    assert ms.residual_tangle(ghz_like) == pytest.approx(1.0)
    half = hs.QuantumState(space, 0.5 * ghz_like.data)
    assert ms.residual_tangle(half, normalize=False) == pytest.approx(1.0 / 16)
    leaked = hs.pure_state(space, ghz_like.data + hs.basis_state(space, (2, 0, 0)).data)
    with pytest.raises(ProjectionError):
        ms.residual_tangle(leaked)
    with pytest.raises(InvalidArgumentError):
        ms.residual_tangle(ghz_like.to_mixed())


def test_closed_form_tangle():
    t = np.linspace(0, 5, 101)
    assert np.allclose(ms.residual_tangle_closed_form(1.3, 0.0, t), np.sin(2 * 1.3 * t) ** 2)
    assert ms.residual_tangle_closed_form(1.0, 0.0, math.pi / 4) == pytest.approx(1.0)
    detuned = ms.residual_tangle_closed_form(1.0, 3.0, np.linspace(0, 10, 2001))
    assert detuned.max() < 1
    with pytest.raises(InvalidArgumentError):
        ms.residual_tangle_closed_form(0.0, 1.0, 1.0)


def coherent(space, alpha, mode):
    dim = space.subsystem_dims[mode]
    n = np.arange(dim)
    c = np.exp(-abs(alpha) ** 2 / 2) * alpha**n / np.sqrt(np.array([math.factorial(k) for k in n], dtype=float))
    vac = [np.eye(d)[0] for d in space.subsystem_dims]
    vac[mode] = c
    return hs.pure_state(space, np.einsum("i,j,k->ijk", *vac).ravel())


def test_g2_reference_states():
    space = hs.make_space((2, 30, 2))
    assert ms.g2_zero(coherent(space, 0.8 + 0.3j, 1)) == pytest.approx(1.0, abs=1e-10)
    assert ms.g2_zero(hs.basis_state(space, (0, 1, 0))) == 0.0
    assert ms.g2_zero(hs.basis_state(space, (0, 2, 0))) == pytest.approx(0.5)
    nbar = 0.3
    p = (nbar / (1 + nbar)) ** np.arange(30) / (1 + nbar)
    rho = np.kron(np.kron(np.diag([1.0, 0]), np.diag(p / p.sum())), np.diag([1.0, 0]))
    assert ms.g2_zero(hs.mixed_state(space, rho)) == pytest.approx(2.0, rel=1e-8)
    with pytest.raises(UndefinedCorrelationError):
        ms.g2_zero(hs.basis_state(space, (1, 0, 0)))
    assert ms.g2_zero(hs.basis_state(space, (1, 0, 0)), mode="l") == 0.0


def test_ghz_fidelity_linear_and_bounded():
    space = hs.make_space((2, 2, 2))
    ghz = hs.pure_state(space, ms.ghz_vector(space))
    other = hs.basis_state(space, (0, 0, 0))
    assert ms.ghz_fidelity(ghz) == pytest.approx(1.0)
    assert ms.ghz_fidelity(hs.basis_state(space, (1, 0, 1))) == pytest.approx(0.5)
    mix = hs.mixed_state(space, 0.25 * ghz.density() + 0.75 * other.density())
    assert ms.ghz_fidelity(mix) == pytest.approx(0.25)
    with pytest.raises(InvalidArgumentError):
        ms.ghz_fidelity(hs.basis_state(hs.make_space((2, 2, 3)), (0, 0, 0)))


def test_contangle_reference_states():
    ghz = hs.pure_state(QUBITS, GHZ.ravel())
    res = ms.contangle_analysis(ghz)
    assert res.value == pytest.approx(1.0)
    assert not res.clipped
    prod = hs.basis_state(QUBITS, (0, 1, 0))
    assert ms.min_residual_contangle(prod) == pytest.approx(0.0, abs=1e-14)
    w = ms.min_residual_contangle(hs.pure_state(QUBITS, W.ravel()))
    assert 0 <= w < 1


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_contangle_vanishes_for_separable_mixtures(seed):
    rng = np.random.default_rng(seed)
    rho = np.zeros((8, 8), dtype=complex)
    weights = rng.dirichlet(np.ones(3))
    for w in weights:
        vs = [unitary_group.rvs(2, random_state=rng)[:, 0] for _ in range(3)]
        v = np.einsum("i,j,k->ijk", *vs).ravel()
        rho += w * np.outer(v, v.conj())
    assert ms.min_residual_contangle(hs.mixed_state(QUBITS, rho)) == pytest.approx(0.0, abs=1e-12)


def test_contangle_normalizes_trace():
    ghz = hs.pure_state(QUBITS, GHZ.ravel()).density()
    assert ms.min_residual_contangle(hs.mixed_state(QUBITS, 0.3 * ghz)) == pytest.approx(1.0)


def test_clip_for_measurement():
    rho = np.diag([0.5, 0.5 + 5e-9, -5e-9, 0.0]).astype(complex)
    clipped = ms.clip_for_measurement(rho)
    assert np.linalg.eigvalsh(clipped).min() >= -1e-15
    with pytest.raises(InvalidArgumentError):
        ms.clip_for_measurement(np.diag([0.6, 0.5, -0.1, 0.0]).astype(complex))


def test_contangle_of_subnormalized_state():
    ghz = hs.pure_state(QUBITS, GHZ.ravel()).density()
    scaled = hs.QuantumState(QUBITS, 0.9 * ghz)
    # trace norms shrink with the norm: (log2(0.9 * 2))^2 on every cut, reductions clip to zero
    assert ms.min_residual_contangle(scaled) == pytest.approx(1.0)
    assert ms.contangle_analysis(scaled, normalize=False).value == pytest.approx(math.log2(1.8) ** 2)
