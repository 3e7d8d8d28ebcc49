"""Atomic level structure: Zeeman sublevels, dipole couplings and lowering operators.

Angular frequencies are in rad/us throughout. Clebsch-Gordan coefficients use
the Condon-Shortley phase convention; only |c|^2 enters observables, the signs
just have to be self-consistent between the drive, cavity and decay operators.
"""
from dataclasses import dataclass, field
from math import factorial, sqrt, pi

import numpy as np
import scipy.sparse as sp

# Bohr magneton over Planck constant, MHz/G (CODATA; not a paper value)
MU_B_MHZ_PER_G = 1.39962449

__all__ = [
    "MU_B_MHZ_PER_G", "LevelScheme", "FourLevelScheme", "TransitionTable",
    "build_level_scheme", "zeeman_shift", "dipole_coupling", "clebsch_gordan",
    "transition_table", "lowering_operator",
]


def zeeman_shift(gF, m, B):
    """Linear Zeeman shift of sublevel ``m`` in rad/us for a field ``B`` in gauss."""
    return 2.0 * pi * gF * MU_B_MHZ_PER_G * m * B


def clebsch_gordan(j1, m1, j2, m2, J, M):
    """<j1 m1; j2 m2 | J M> for integer angular momenta (Racah closed form)."""
    if m1 + m2 != M:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return 0.0
    if J < abs(j1 - j2) or J > j1 + j2:
        return 0.0
    f = factorial
    pref = (2 * J + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J) / f(j1 + j2 + J + 1)
    pref *= f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)
    s = 0.0
    kmin = max(0, j2 - J - m1, j1 - J + m2)
    kmax = min(j1 + j2 - J, j1 - m1, j2 + m2)
    for k in range(kmin, kmax + 1):
        s += (-1) ** k / (f(k) * f(j1 + j2 - J - k) * f(j1 - m1 - k) * f(j2 + m2 - k)
                          * f(J - j2 + m1 + k) * f(J - j1 - m2 + k))
    return sqrt(pref) * s


def dipole_coupling(F, m, Fp, mp, q):
    """Relative dipole coupling <F m; 1 q | F' m'> between |F m> and |F' m'>.

    Zero for m' != m + q or any other forbidden combination.
    """
    if q not in (-1, 0, 1) or mp != m + q:
        return 0.0
    return clebsch_gordan(F, m, 1, q, Fp, mp)


@dataclass(frozen=True)
class TransitionTable:
    """Map (m_ground, q) -> (m_excited, coefficient); zero couplings are omitted."""
    ground_F: int
    excited_F: int
    entries: dict

    def branching(self, mp):
        """Sum over decay paths of |c|^2 for excited sublevel ``mp``."""
        return sum(c * c for (m, q), (me, c) in self.entries.items() if me == mp)


def transition_table(ground_F, excited_F):
    entries = {}
    for m in range(-ground_F, ground_F + 1):
        for q in (-1, 0, 1):
            mp = m + q
            if abs(mp) > excited_F:
                continue
            c = dipole_coupling(ground_F, m, excited_F, mp, q)
            if c != 0.0:
                entries[(m, q)] = (mp, c)
    return TransitionTable(ground_F, excited_F, entries)


@dataclass(frozen=True)
class LevelScheme:
    """Ground F and excited F' Zeeman manifolds in a static field.

    Level index order: ground m = -F..F, then excited m' = -F'..F'.
    ``energies`` holds the Zeeman energies only; the optical detuning is added
    by the system model.
    """
    ground_F: int
    excited_F: int
    ground_gF: float
    excited_gF: float
    B_field: float
    sublevels: tuple = field(repr=False)
    table: TransitionTable = field(repr=False)

    @property
    def n_ground(self):
        return 2 * self.ground_F + 1

    @property
    def n_levels(self):
        return len(self.sublevels)

    @property
    def energies(self):
        return np.array([e for (_, _, e) in self.sublevels])

    @property
    def excited_mask(self):
        return np.array([man == "e" for (man, _, _) in self.sublevels])

    def index(self, manifold, m):
        F = self.ground_F if manifold == "g" else self.excited_F
        if abs(m) > F:
            raise ValueError(f"m={m} outside manifold {manifold} with F={F}")
        return (m + F) if manifold == "g" else self.n_ground + m + F

    def lowering(self, q):
        return lowering_operator(self, q)

    def decay(self, q):
        return lowering_operator(self, q)

    def ground_pair(self):
        """Indices of the m=-1, m=+1 ground sublevels that carry the beat."""
        return self.index("g", -1), self.index("g", 1)


def build_level_scheme(ground_F, excited_F, gF_pair, B):
    """Enumerate ground and excited sublevels with their Zeeman energies."""
    if ground_F < 0 or excited_F < 0:
        raise ValueError("angular momenta must be non-negative")
    if abs(ground_F - excited_F) > 1 or (ground_F == 0 and excited_F == 0):
        raise ValueError(f"F={ground_F} -> F'={excited_F} is not dipole allowed")
    gg, ge = gF_pair
    subs = [("g", m, zeeman_shift(gg, m, B)) for m in range(-ground_F, ground_F + 1)]
    subs += [("e", m, zeeman_shift(ge, m, B)) for m in range(-excited_F, excited_F + 1)]
    return LevelScheme(ground_F, excited_F, float(gg), float(ge), float(B), tuple(subs),
                       transition_table(ground_F, excited_F))


@dataclass(frozen=True)
class FourLevelScheme:
    """Reduced scheme g-, g+, e-, e+ with pi legs g-<->e- and g+<->e+ only.

    The two legs are detuned by -delta and +delta on top of the global
    atom-drive detuning. ``ground_split`` is E(g+) - E(g-). ``leg_weights``
    scales the drive/cavity coupling per leg (equal by default); spontaneous
    decay always carries full weight.
    """
    ground_split: float = 0.0
    delta: float = 0.0
    leg_weights: tuple = (1.0, 1.0)

    n_levels = 4
    n_ground = 2

    @property
    def energies(self):
        h = 0.5 * self.ground_split
        return np.array([-h, h, -h - self.delta, h + self.delta])

    @property
    def excited_mask(self):
        return np.array([False, False, True, True])

    def index(self, manifold, m):
        if m not in (-1, 1):
            raise ValueError("four-level scheme only has m = -1, +1")
        return (0 if manifold == "g" else 2) + (m > 0)

    def ground_pair(self):
        return 0, 1

    def lowering(self, q):
        if q != 0:
            return sp.csr_matrix((4, 4))
        w0, w1 = self.leg_weights
        return sp.csr_matrix(([w0, w1], ([0, 1], [2, 3])), shape=(4, 4))

    def decay(self, q):
        if q != 0:
            return sp.csr_matrix((4, 4))
        return sp.csr_matrix(([1.0, 1.0], ([0, 1], [2, 3])), shape=(4, 4))


def lowering_operator(scheme, q):
    """D_q = sum_m c(m, q) |g, m><e, m+q| as a sparse matrix on the atom levels."""
    if isinstance(scheme, FourLevelScheme):
        return scheme.lowering(q)
    if q not in (-1, 0, 1):
        raise ValueError("q must be -1, 0 or +1")
    rows, cols, vals = [], [], []
    for (m, qq), (mp, c) in scheme.table.entries.items():
        if qq == q:
            rows.append(scheme.index("g", m))
            cols.append(scheme.index("e", mp))
            vals.append(c)
    n = scheme.n_levels
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
