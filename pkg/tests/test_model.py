import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from nvmagnon import hilbert as hs
from nvmagnon import model as md
from nvmagnon.errors import (InvalidArgumentError, MissingParameterError, ModelWarning, ResonanceError,
                             UnstableSqueezingError)


def physical(**kw):
    base = dict(omega_l=10.0, omega_r=12.0, kerr_l=0.01, kerr_r=0.01, g_l=0.5, g_r=0.5,
                nu_l=9.0, nu_r=11.0, drive_l=1.0, drive_r=1.0, omega_g=0.0, omega_e=60.0,
                omega_f=70.0, kappa_l=0.1, kappa_r=0.1, gamma_q=0.001)
    base.update(kw)
    return md.PhysicalParams(**base)


def integrate_classical(p, mode, m0=0j, t_end=400.0):
    q = p.mode(mode)
    detuning, kerr, drive, kappa = q["omega"] - q["nu"], q["kerr"], q["drive"], q["kappa"]

    def rhs(t, y):
        m = y[0] + 1j * y[1]
        dm = -(1j * (detuning - kerr * abs(m) ** 2) + kappa / 2) * m - 1j * drive
        return [dm.real, dm.imag]
    sol = solve_ivp(rhs, (0, t_end), [m0.real, m0.imag], rtol=1e-10, atol=1e-12)
    return sol.y[0, -1] + 1j * sol.y[1, -1]


def test_classical_amplitude_matches_time_integration():
    # blue side of a K > 0 mode: a single stable branch
    p = physical(nu_l=11.0)
    roots = md.solve_classical_amplitude(p, "l")
    assert len(roots) == 1 and roots[0].stable
    assert abs(integrate_classical(p, "l") - roots[0].amplitude) < 1e-6


def test_classical_bistability_two_stable_branches():
    # red-detuned drive on a Kerr mode with K > 0 folds the response curve
    p = physical(omega_l=10.0, nu_l=8.0, kerr_l=0.05, drive_l=0.8, kappa_l=0.05)
    roots = md.solve_classical_amplitude(p, "l")
    assert len(roots) == 3
    assert [r.stable for r in roots] == [True, False, True]
    stable = [r.amplitude for r in roots if r.stable]
    # each stable root attracts trajectories started close to it
    lo = integrate_classical(p, "l", 0j, 2000.0)
    hi = integrate_classical(p, "l", 1.01 * stable[1], 2000.0)
    assert min(abs(lo - s) for s in stable) < 1e-5
    assert min(abs(hi - s) for s in stable) < 1e-5
    assert abs(lo - hi) > 0.1
    d_lo = md.derive(p, branch="lowest")
    d_hi = md.derive(p, branch="highest")
    assert abs(d_lo.amplitude_l) < abs(d_hi.amplitude_l)
    assert "bistable_l:lowest" in d_lo.flags


def test_classical_cubic_residual():
    p = physical(kerr_r=0.03, drive_r=2.0)
    for root in md.solve_classical_amplitude(p, "r"):
        m = root.amplitude
        lhs = (1j * (p.omega_r - p.nu_r) - 1j * p.kerr_r * abs(m) ** 2 + p.kappa_r / 2) * m
        assert abs(lhs + 1j * p.drive_r) < 1e-10


def test_linearize_kerr_values():
    p = physical()
    amp = 0.3 + 0.4j
    lin = md.linearize_kerr(p, amp, "l")
    assert lin.delta_k == pytest.approx(-2 * 0.01 * 0.25)
    assert lin.omega_k == pytest.approx(1.0 - 0.005)
    assert lin.dpa == pytest.approx(0.01 * amp**2)


@settings(max_examples=20, deadline=None)
@given(st.floats(-20, 20).filter(lambda x: abs(x) > 0.1), st.floats(0, 0.95))
def test_bogoliubov_diagonalizes_quadratic_form(omega_k, frac):
    dpa = frac * abs(omega_k)
    xi, omega_s = md.squeezing_transform(omega_k, dpa)
    c, s = math.cosh(xi), math.sinh(xi)
    M = np.array([[omega_k, -dpa], [-dpa, omega_k]])
    T = np.array([[c, s], [s, c]])
    Mp = T.T @ M @ T
    assert abs(Mp[0, 1]) < 1e-9 * max(1.0, abs(omega_k)) * math.cosh(2 * xi)
    assert Mp[0, 0] == pytest.approx(omega_s, rel=1e-9, abs=1e-9)
    # symplectic eigenvalues of the dynamical matrix give the same frequency
    D = np.array([[omega_k, -dpa], [dpa, -omega_k]])
    assert max(np.linalg.eigvals(D).real) == pytest.approx(abs(omega_s), rel=1e-9)


def test_squeezed_vacuum_occupation_from_truncated_hamiltonian():
    omega_k, dpa = 1.0, 0.5
    xi, omega_s = md.squeezing_transform(omega_k, dpa)
    s = hs.make_space([120])
    a = hs.lowering_op(s, 0)
    h = (a.dag() @ a) * omega_k - (a.dag() @ a.dag() + a @ a) * (dpa / 2)
    vals, vecs = np.linalg.eigh(h.toarray())
    ground = hs.pure_state(s, vecs[:, 0])
    assert hs.expect(hs.number_op(s, 0), ground).real == pytest.approx(math.sinh(xi) ** 2, rel=1e-9)
    assert vals[1] - vals[0] == pytest.approx(omega_s, rel=1e-9)


def test_squeezing_edges():
    with pytest.raises(UnstableSqueezingError):
        md.squeezing_transform(1.0, 1.0)
    xi, w = md.squeezing_transform(-2.0, 1.0)
    assert w < 0 and xi < 0
    assert md.squeezing_transform(3.0, 0.0) == (0.0, 3.0)


def test_enhancement_ratios():
    r = md.enhancement_ratios(0.0, 0.0)
    assert (r.exact_joint, r.paper_asymptote, r.single) == (1.0, 0.25, 1.0)
    r = md.enhancement_ratios(2.0, 2.0)
    assert r.paper_asymptote == pytest.approx(math.exp(4) / 4, rel=1e-14)
    assert r.coop_exact == pytest.approx(r.exact_joint**3, rel=1e-14)
    big = md.enhancement_ratios(8.0, 8.0)
    assert big.exact_joint / big.paper_asymptote == pytest.approx(1.0, abs=1e-6)


def test_dispersive_reduce_values_and_errors():
    d = md.dispersive_reduce(1.0, 2.0, 20.0, 30.0, 0.0, 5.0, 10.0)
    assert d.big_delta_l == 15.0 and d.big_delta_r == 20.0
    assert d.G_k == pytest.approx(0.5 * 2.0 * (1 / 15 + 1 / 20))
    assert d.omega_q == pytest.approx(10.0 + 4 / 20 - 1 / 15)
    approx = md.dispersive_reduce(1.0, 2.0, 20.0, 30.0, 0.0, 5.0, 10.0, exact_qubit_frequency=False)
    assert approx.omega_q == 10.0
    assert d.flagged  # 2/20 = 0.1 > 0.05
    with pytest.raises(ResonanceError):
        md.dispersive_reduce(1.0, 1.0, 5.0, 30.0, 0.0, 5.0, 0.0)
    with pytest.warns(ModelWarning):
        md.dispersive_reduce(3.0, 1.0, 20.0, 30.0, 0.0, 0.0, 0.0)


@pytest.mark.parametrize("g", [0.2, 0.1])
def test_dispersive_splitting_matches_full_model(g):
    # |1,0,f> and |0,1,e> are degenerate in the effective model; the full
    # three-level model splits them by 2 G_k up to fourth order in g/Delta
    delta_e, delta_f, wl, wr = 23.0, 28.0, 3.0, 8.0
    disp = md.dispersive_reduce(g, g, delta_e, delta_f, 0.0, wl, wr)
    d = md.DerivedParams(delta_e=delta_e, delta_f=delta_f, omega_k_l=wl, omega_k_r=wr, g_l=g, g_r=g,
                         G_k=disp.G_k, omega_q=disp.omega_q)
    space = hs.make_space((3, 3, 3))
    vals = np.linalg.eigvalsh(md.build_h_full(d, space).toarray())
    target = wl + delta_f  # unperturbed energy of the doublet
    near = np.sort(vals[np.abs(vals - target) < 0.3])
    assert len(near) == 2
    split = near[1] - near[0]
    assert split == pytest.approx(2 * disp.G_k, rel=8 * (g / 20) ** 2)


def test_derive_chain_consistency():
    p = physical()
    d = md.derive(p)
    for mode in ("l", "r"):
        q = p.mode(mode)
        amp = getattr(d, f"amplitude_{mode}")
        omega_k = (q["omega"] - q["nu"]) - 2 * q["kerr"] * abs(amp) ** 2
        assert getattr(d, f"omega_k_{mode}") == pytest.approx(omega_k)
        xi, ws = md.squeezing_transform(omega_k, q["kerr"] * abs(amp) ** 2)
        assert getattr(d, f"xi_{mode}") == pytest.approx(xi)
        assert getattr(d, f"omega_s_{mode}") == pytest.approx(ws)
    assert d.G_s == pytest.approx(d.G_k * math.cosh(d.xi_l) * math.cosh(d.xi_r))
    assert d.big_delta_l == pytest.approx(p.omega_e - p.nu_l - d.omega_k_l)
    assert d.big_delta_r == pytest.approx(p.omega_f - p.nu_r - d.omega_k_r)
    printed = md.derive(p, delta_f_convention="printed")
    assert printed.delta_f == pytest.approx(p.omega_e - p.nu_r)
    assert "delta_f:printed" in printed.flags
    assert d.C_s == pytest.approx(d.G_s**3 / (0.1 * 0.1 * 0.001))


def test_physical_params_validation():
    with pytest.raises(InvalidArgumentError):
        physical(kappa_l=-1.0)
    with pytest.raises(InvalidArgumentError):
        md.derive(physical(), delta_f_convention="other")


def test_squeezed_frame_resonance_and_coupling_conventions():
    d = md.squeezed_frame(1.0, 1.0, 10.0, omega_s_l=-3.0, detuning=0.5)
    assert d.omega_s_r == pytest.approx(-3.0 + 10.0 + 0.5)
    assert d.G_s == pytest.approx(math.cosh(1.0) ** 2)
    a = md.squeezed_frame(1.0, 1.0, 10.0, coupling="asymptote")
    assert a.G_s == pytest.approx(math.exp(2) / 4)
    with pytest.raises(InvalidArgumentError):
        md.squeezed_frame(1.0, 1.0, 10.0, coupling="both")
    with pytest.raises(MissingParameterError):
        md.build_h_squeezed(md.DerivedParams(G_s=1.0), hs.make_space((2, 2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5), st.floats(-10, 10))
def test_single_excitation_rabi_splitting(G, detuning):
    d = md.squeezed_frame(G, 0.0, 4.0, omega_s_l=1.0, detuning=detuning)
    d = md.DerivedParams(**{**d.__dict__, "G_s": G})
    space = hs.make_space((3, 3, 2))
    h = md.build_h_squeezed(d, space).toarray()
    idx = [space.index_of((1, 0, 1)), space.index_of((0, 1, 0))]
    block = h[np.ix_(idx, idx)]
    vals = np.linalg.eigvalsh(block)
    assert vals[1] - vals[0] == pytest.approx(2 * math.sqrt(G**2 + detuning**2 / 4), rel=1e-12)
    # the block is closed: no other state couples to it
    others = [i for i in range(space.total) if i not in idx]
    assert np.allclose(h[np.ix_(others, idx)], 0)


def test_hamiltonians_are_hermitian_and_conditional_is_dissipative():
    d = md.squeezed_frame(1.0, 1.5, 10.0, omega_s_l=-2.0, kappa_l=0.2, kappa_r=0.3, gamma_q=0.01)
    space = hs.make_space((3, 3, 2))
    assert md.build_h_squeezed(d, space).is_hermitian()
    assert md.build_h_blockade(d, space, 0.1).is_hermitian()
    hc = md.build_h_conditional(d, space).toarray()
    anti = (hc - hc.conj().T) / 2j
    assert np.allclose(anti, np.diag(np.diag(anti)))
    i = space.index_of((1, 2, 1))
    assert anti[i, i].real == pytest.approx(-0.5 * (0.2 + 2 * 0.3 + 0.01))
    with pytest.raises(InvalidArgumentError):
        md.build_h_squeezed(d, hs.make_space((3, 3, 3)))


def test_thermal_occupation():
    nbar = md.thermal_occupation(2 * math.pi * 3e9, 0.030)
    assert nbar == pytest.approx(0.00831, rel=2e-3)
    assert md.thermal_occupation(1e9, 0.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        md.thermal_occupation(1e9, -1.0)


def test_collapse_terms():
    d = md.squeezed_frame(1.0, 0.0, 1.0, kappa_l=0.1, kappa_r=0.2, gamma_q=0.01)
    space = hs.make_space((3, 3, 2))
    terms = md.build_collapse_terms(d, space)
    assert [t.label for t in terms] == ["m_s_l", "m_s_r", "sigma_-"]
    with pytest.raises(MissingParameterError):
        md.build_collapse_terms(d, space, temperature=0.01)
    hot = md.build_collapse_terms(md.DerivedParams(**{**d.__dict__, "omega_abs_l": 1e10, "omega_abs_r": 1e10}),
                                  space, temperature=0.05)
    assert len(hot) == 5
    nbar = hot[0].thermal_occupation
    assert hot[0].rate == pytest.approx(0.1 * (nbar + 1))
    assert hot[1].rate == pytest.approx(0.1 * nbar)
    qutrit = md.build_collapse_terms(d, hs.make_space((2, 2, 3)), frame="bare")
    assert [t.label for t in qutrit] == ["m_l", "m_r", "sigma_ge", "sigma_gf"]
