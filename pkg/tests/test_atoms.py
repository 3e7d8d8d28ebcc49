from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sympy import S
from sympy.physics.quantum.cg import CG

from qbeat.atoms import (build_level_scheme, zeeman_shift, dipole_coupling, clebsch_gordan,
                         transition_table, lowering_operator, FourLevelScheme, MU_B_MHZ_PER_G)

GF = (1 / 3, 1 / 2)


def cg_oracle(j1, m1, j2, m2, J, M):
    return float(CG(S(j1), S(m1), S(j2), S(m2), S(J), S(M)).doit())


# -- level scheme ------------------------------------------------------------

def test_zero_field_has_no_zeeman_energy():
    s = build_level_scheme(3, 4, GF, 0.0)
    assert np.all(s.energies == 0.0)


def test_sublevel_count():
    s = build_level_scheme(3, 4, GF, 5.0)
    assert s.n_levels == 16 == 7 + 9


@pytest.mark.parametrize("F, Fp", [(3, 1), (3, 5), (0, 0)])
def test_forbidden_manifold_pair_rejected(F, Fp):
    with pytest.raises(ValueError):
        build_level_scheme(F, Fp, GF, 5.0)


@pytest.mark.parametrize("F, Fp", [(3, 4), (3, 3), (3, 2), (1, 0), (2, 3)])
def test_zeeman_energies_odd_and_zero_at_m0(F, Fp):
    s = build_level_scheme(F, Fp, GF, 5.0)
    for man, FF in (("g", F), ("e", Fp)):
        e = {m: s.energies[s.index(man, m)] for m in range(-FF, FF + 1)}
        assert e[0] == 0.0
        for m in range(1, FF + 1):
            assert e[m] == -e[-m]


# -- zeeman shift --------------------------------------------------------------

def test_zeeman_examples():
    assert zeeman_shift(1 / 3, 0, 5) == 0.0
    hand = 2 * pi * 1.3996 * (1 / 3) * 5      # 2 pi x 2.333 MHz
    assert zeeman_shift(1 / 3, 1, 5) == pytest.approx(hand, rel=1e-4)
    assert zeeman_shift(1 / 3, 1, 5) / (2 * pi) == pytest.approx(2.333, abs=1e-3)
    assert zeeman_shift(1 / 3, -1, 5) == -zeeman_shift(1 / 3, 1, 5)


@given(st.floats(-2, 2), st.integers(-4, 4), st.integers(-4, 4), st.floats(0, 20), st.floats(0, 20))
def test_zeeman_linear_in_m_and_b(gf, m1, m2, b1, b2):
    z = zeeman_shift
    assert z(gf, m1 + m2, b1) == pytest.approx(z(gf, m1, b1) + z(gf, m2, b1), abs=1e-9)
    assert z(gf, m1, b1 + b2) == pytest.approx(z(gf, m1, b1) + z(gf, m1, b2), abs=1e-9)
    assert z(gf, m1, b1) == pytest.approx(2 * pi * gf * MU_B_MHZ_PER_G * m1 * b1, abs=1e-9)


# -- dipole couplings -------------------------------------------------------------

def test_dipole_examples():
    assert dipole_coupling(3, 0, 3, 0, 0) == 0.0
    assert abs(dipole_coupling(3, 3, 4, 4, 1)) == pytest.approx(1.0, abs=1e-14)
    assert dipole_coupling(3, 0, 4, 1, 0) == 0.0


def test_clebsch_gordan_matches_sympy_everywhere():
    for F in range(0, 5):
        for Fp in range(max(F - 1, 0), F + 2):
            for m in range(-F, F + 1):
                for q in (-1, 0, 1):
                    for mp in range(-Fp, Fp + 1):
                        want = cg_oracle(F, m, 1, q, Fp, mp) if abs(mp) <= Fp else 0.0
                        assert clebsch_gordan(F, m, 1, q, Fp, mp) == pytest.approx(want, abs=1e-13)


@pytest.mark.parametrize("F, Fp", [(3, 4), (3, 3), (3, 2), (1, 2), (2, 1), (1, 0)])
def test_decay_completeness(F, Fp):
    for mp in range(-Fp, Fp + 1):
        tot = sum(dipole_coupling(F, mp - q, Fp, mp, q) ** 2 for q in (-1, 0, 1) if abs(mp - q) <= F)
        assert tot == pytest.approx(1.0, abs=1e-12)
    tab = transition_table(F, Fp)
    for mp in range(-Fp, Fp + 1):
        assert tab.branching(mp) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("F, Fp", [(3, 4), (3, 3), (2, 1)])
def test_dipole_mirror_symmetry(F, Fp):
    for m in range(-F, F + 1):
        for q in (-1, 0, 1):
            a = dipole_coupling(F, m, Fp, m + q, q)
            b = dipole_coupling(F, -m, Fp, -m - q, -q)
            assert abs(a) == pytest.approx(abs(b), abs=1e-12)


def test_transition_table_omits_forbidden_entries():
    tab = transition_table(3, 3)
    assert (0, 0) not in tab.entries            # <3 0; 1 0 | 3 0> = 0
    for (m, q), (mp, c) in tab.entries.items():
        assert mp == m + q and abs(mp) <= 3 and c != 0.0


# -- lowering operators -------------------------------------------------------------

def test_pi_lowering_operator_f3_f4():
    s = build_level_scheme(3, 4, GF, 5.0)
    D0 = lowering_operator(s, 0)
    assert D0.nnz == 7
    for m in range(-3, 4):
        assert D0[s.index("g", m), s.index("e", m)] == dipole_coupling(3, m, 4, m, 0)


@pytest.mark.parametrize("q", [-1, 0, 1])
def test_dq_dagger_dq_is_diagonal(q):
    s = build_level_scheme(3, 4, GF, 5.0)
    D = lowering_operator(s, q)
    P = (D.conj().T @ D).toarray()
    assert np.count_nonzero(P - np.diag(np.diag(P))) == 0


def test_four_level_scheme_structure():
    fl = FourLevelScheme(ground_split=1.0, delta=0.3)
    D0 = lowering_operator(fl, 0)
    assert D0.nnz == 2
    assert D0[0, 2] == D0[1, 3] == 1.0           # equal legs, no cross couplings
    assert D0[0, 3] == D0[1, 2] == 0.0
    assert lowering_operator(fl, 1).nnz == 0
    e = fl.energies
    assert e[1] - e[0] == pytest.approx(1.0)


def test_operators_reproducible():
    a = lowering_operator(build_level_scheme(3, 4, GF, 5.0), -1)
    b = lowering_operator(build_level_scheme(3, 4, GF, 5.0), -1)
    assert (a != b).nnz == 0
