from math import pi, sqrt

import numpy as np
import pytest

from qbeat.atoms import FourLevelScheme, build_level_scheme
from qbeat.master import MasterEquation, OracleBudgetError, trace_distance
from qbeat.model import (SystemModel, DimensionError, build_operators, hermitian_part, destroy,
                         drive_for_photons, product_state, reduced_atom, basis_state)

from conftest import four_level, TWO_PI


def dense_heff(me, t=0.0):
    return me.heff(t, me.seg(t, me.alpha_ss() if me.displaced else 0.0)).toarray()


def hand_four_level_lab(g, kappa, gamma, E, delta_a, delta_c, split, delta, nv):
    """Lab-frame H_eff written out with explicit Kronecker products (H mode cutoff 0)."""
    h = 0.5 * split
    atom = np.diag([-h, h, -h - delta + delta_a - 0.5j * gamma, h + delta + delta_a - 0.5j * gamma])
    D0 = np.zeros((4, 4))
    D0[0, 2] = D0[1, 3] = 1.0
    a = np.diag(np.sqrt(np.arange(1, nv + 1)), 1)
    n = a.T @ a
    Ia, Iv = np.eye(4), np.eye(nv + 1)
    H = np.kron(atom, Iv) + np.kron(Ia, (delta_c - 1j * kappa) * n)
    H = H + g * (np.kron(D0, a.T) + np.kron(D0.T, a))
    H = H + 1j * E * np.kron(Ia, a.T - a)
    return H


def test_empty_cavity_heff():
    m = four_level(n_slots=0, nv=2, nh=2, delta_c=0.7, frame="lab")
    H = dense_heff(MasterEquation(m))
    n1 = np.arange(3)
    n_tot = (n1[:, None] + n1[None, :]).reshape(-1)
    assert np.allclose(H, np.diag((0.7 - 1j * m.kappa) * n_tot), atol=1e-12, rtol=0)


def test_four_level_heff_matches_hand_matrix():
    pars = dict(g=TWO_PI * 1.5, kappa=TWO_PI * 3.0, gamma=TWO_PI * 6.07, E=1.3, delta_a=0.4,
                delta_c=-0.2, split=TWO_PI * 4.67, delta=TWO_PI * 0.607, nv=3)
    m = SystemModel(FourLevelScheme(pars["split"], pars["delta"]), pars["g"], pars["kappa"], pars["gamma"],
                    drive=pars["E"], delta_a=pars["delta_a"], delta_c=pars["delta_c"], n_max_v=3,
                    n_max_h=0, frame="lab")
    H = dense_heff(MasterEquation(m))
    assert np.allclose(H, hand_four_level_lab(**pars), atol=1e-13)


def test_hermitian_part_has_no_decay_terms():
    m = four_level(nv=2, nh=1, drive=0.9, frame="lab")
    me = MasterEquation(m)
    H = me.heff(0.0, me.seg(0.0, 0.0))
    Hh = hermitian_part(H).toarray()
    assert np.allclose(Hh, Hh.conj().T, atol=1e-15)
    # the anti-Hermitian part is exactly -i (kappa n + gamma/2 P_e)
    anti = (H.toarray() - Hh) * 1j
    expect = np.zeros(m.dim)
    for k in range(m.dim):
        a, v, hh = np.unravel_index(k, m.dims)
        expect[k] = m.kappa * (v + hh) + 0.5 * m.gamma * (a >= 2)
    assert np.allclose(anti, np.diag(expect), atol=1e-13)


def test_dimension_guard():
    s = build_level_scheme(3, 4, (1 / 3, 1 / 2), 5.0)
    m = SystemModel(s, 1.0, 1.0, 1.0, n_max_v=3, n_max_h=3, n_slots=2, dim_budget=4096)
    assert m.dim == 16 * 16 * 16
    build_operators(m)
    with pytest.raises(DimensionError):
        build_operators(m.with_(n_slots=3))


def test_model_validation():
    with pytest.raises(ValueError):
        four_level(kappa=0.0)
    with pytest.raises(ValueError):
        four_level(eff_h=1.2)


def test_drive_for_photons():
    assert abs(drive_for_photons(1.21, 3.0) / 3.0) ** 2 == pytest.approx(1.21)
    m = four_level(drive=drive_for_photons(0.3, TWO_PI * 2.0, 0.5), delta_c=0.5)
    assert m.n_photons == pytest.approx(0.3)


def test_reduced_atom_of_product_state():
    m = four_level(nv=2, nh=1)
    v = np.array([0.6, 0.8j, 0, 0])
    psi = product_state(m, [v], v_state=np.array([0, 1, 0]))
    r = reduced_atom(psi, m)
    assert np.allclose(r, np.outer(v, v.conj()))
    assert np.allclose(reduced_atom(np.outer(psi, psi.conj()), m), r)


# -- master equation oracle ---------------------------------------------------------

def test_oracle_empty_driven_cavity_photon_number():
    kappa = TWO_PI * 2.0
    E = drive_for_photons(0.4, kappa)
    m = four_level(n_slots=0, nv=8, nh=0, kappa=kappa, drive=E, frame="lab")
    rho = MasterEquation(m).steady_state()
    n = np.diag(destroy(9).T @ destroy(9).toarray())
    assert np.real(np.trace(rho @ np.diag(n))) == pytest.approx(abs(E / kappa) ** 2, abs=1e-6)


def test_oracle_excited_state_decay():
    gamma = TWO_PI * 6.0
    m = four_level(nv=0, nh=0, gamma=gamma, g=0.0)
    psi = basis_state(m, [2])
    ts = np.linspace(0, 0.2, 9)
    rhos = MasterEquation(m).evolve(np.outer(psi, psi.conj()), ts)
    assert np.allclose([r[2, 2].real for r in rhos], np.exp(-gamma * ts), atol=1e-8, rtol=0)
    assert np.allclose([r[0, 0].real for r in rhos], 1 - np.exp(-gamma * ts), atol=1e-8, rtol=0)


def test_oracle_trace_and_hermiticity():
    m = four_level(split=TWO_PI * 4.0, delta=TWO_PI * 0.6, drive=drive_for_photons(0.2, TWO_PI * 2.0),
                   nv=2, nh=0)
    v = np.array([1, 1, 0, 0]) / sqrt(2)
    psi = product_state(m, [v])
    rhos = MasterEquation(m).evolve(np.outer(psi, psi.conj()), np.linspace(0, 3, 7))
    for r in rhos:
        assert abs(np.trace(r) - 1) < 1e-8
        assert np.abs(r - r.conj().T).max() < 1e-10


def test_displaced_and_lab_frames_agree():
    # same physics, the lab frame just needs a bigger Fock space
    kappa = TWO_PI * 2.0
    kw = dict(split=TWO_PI * 4.0, delta=TWO_PI * 0.6, drive=drive_for_photons(0.2, kappa), kappa=kappa,
              nh=0, eff_v=0.5)
    lab = four_level(nv=7, frame="lab", **kw)
    dis = four_level(nv=5, frame="displaced", **kw)
    v = np.array([1, 1, 0, 0]) / sqrt(2)
    ts = np.linspace(0, 2, 5)
    from qbeat.trajectory import coherent_vector
    a = drive_for_photons(0.2, kappa) / kappa
    r_lab = MasterEquation(lab).evolve(_pure(product_state(lab, [v], coherent_vector(a, 8))), ts)
    r_dis = MasterEquation(dis).evolve(_pure(product_state(dis, [v])), ts)
    for x, y in zip(r_lab, r_dis):
        assert trace_distance(reduced_atom(x, lab), reduced_atom(y, dis)) < 1e-4


def _pure(psi):
    return np.outer(psi, psi.conj())


def test_oracle_budget():
    s = build_level_scheme(3, 4, (1 / 3, 1 / 2), 5.0)
    with pytest.raises(OracleBudgetError):
        MasterEquation(SystemModel(s, 1.0, 1.0, 1.0, n_max_v=1, n_max_h=1, n_slots=2))
