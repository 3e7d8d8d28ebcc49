"""Composite system model: K atom slots x V mode x H mode, and its operators.

The effective non-Hermitian Hamiltonian is stored as

    H_eff(t) = diag(d0) + s(t) * 1 + sum_j c_j(t) M_j

where ``d0`` collects everything diagonal in the product basis (Zeeman
energies, detunings, -i kappa n, -i gamma/2 on excited levels) and the sparse
matrices ``M_j`` are grouped into a single CSR with a term id per entry. The
coefficients ``c_j(t)`` and ``s(t)`` are evaluated by
:func:`qbeat.kernels.coefficients` from the per-segment drive state and the
per-slot transit geometry.

Two frames are supported. ``lab`` keeps the V mode as is and drives it with
iE(a_V^dag - a_V). ``displaced`` (default) splits a_V = alpha(t) + b_V with
alpha(t) the empty-cavity coherent amplitude, so the Fock cutoff applies to
fluctuations only. Detected cavity channels then carry the coherent part
explicitly, L = sqrt(2 kappa eta) (c + u_V alpha), which keeps click records
physical; undetected losses are unravelled without it.

Composite ordering is [slot_0, ..., slot_{K-1}, V, H] with H fastest.
"""
from dataclasses import dataclass, field, replace
from math import cos, sin, radians, sqrt

import numpy as np
import scipy.sparse as sp

from .atoms import FourLevelScheme

# term layout per slot: coupling to quantized modes, classical raise, classical lower
TERMS_PER_SLOT = 3
FRAMES = ("displaced", "lab")


class DimensionError(ValueError):
    """Composite Hilbert space exceeds the configured budget."""


@dataclass(frozen=True)
class SystemModel:
    """Physical parameters in rad/us; ``theta_h`` in degrees.

    ``drive`` is the V-mode drive amplitude E; the empty-cavity photon number
    is |E|^2 / (kappa^2 + delta_c^2).
    """
    scheme: object
    g_max: float
    kappa: float
    gamma: float
    drive: float = 0.0
    delta_a: float = 0.0
    delta_c: float = 0.0
    n_max_v: int = 3
    n_max_h: int = 3
    theta_h: float = 0.0
    eff_h: float = 1.0
    eff_v: float = 1.0
    n_slots: int = 1
    frame: str = "displaced"
    dim_budget: int = 8192

    def __post_init__(self):
        if self.kappa <= 0 or self.gamma <= 0:
            raise ValueError("kappa and gamma must be positive")
        if self.n_max_v < 0 or self.n_max_h < 0:
            raise ValueError("Fock cutoffs must be >= 0")
        for eff in (self.eff_h, self.eff_v):
            if not 0.0 <= eff <= 1.0:
                raise ValueError("detector efficiencies must lie in [0, 1]")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if self.n_slots < 0:
            raise ValueError("n_slots must be >= 0")

    @property
    def n_photons(self):
        return abs(self.drive) ** 2 / (self.kappa ** 2 + self.delta_c ** 2)

    @property
    def dims(self):
        return [self.scheme.n_levels] * self.n_slots + [self.n_max_v + 1, self.n_max_h + 1]

    @property
    def dim(self):
        return int(np.prod(self.dims))

    def with_(self, **kw):
        return replace(self, **kw)


def drive_for_photons(n, kappa, delta_c=0.0):
    """Drive amplitude E giving ``n`` empty-cavity photons."""
    return sqrt(n) * sqrt(kappa ** 2 + delta_c ** 2)


def homodyne_mixing(theta_h_deg):
    """Rows: detector ports (H, V); columns: (a_H, a_V) amplitudes."""
    th = radians(2.0 * theta_h_deg)
    return np.array([[cos(th), sin(th)], [-sin(th), cos(th)]])


def destroy(n):
    if n <= 1:
        return sp.csr_matrix((max(n, 1), max(n, 1)))
    return sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, format="csr")


def embed(op, pos, dims):
    """Kronecker-embed ``op`` acting on subsystem ``pos``."""
    out = None
    for i, d in enumerate(dims):
        f = sp.csr_matrix(op) if i == pos else sp.identity(d, format="csr")
        out = f if out is None else sp.kron(out, f, format="csr")
    return out.tocsr()


@dataclass
class Channel:
    """Jump channel L(t) = op + beta * alpha(t) * 1."""
    label: str
    op: sp.csr_matrix
    beta: complex = 0.0
    detected: bool = False

    def at(self, alpha):
        return self.op, self.beta * alpha

    def apply(self, psi, alpha):
        out = self.op @ psi
        if self.beta != 0.0:
            out = out + (self.beta * alpha) * psi
        return out


@dataclass
class Operators:
    """Assembled operators for one :class:`SystemModel`."""
    model: SystemModel
    dims: list
    d0: np.ndarray
    indptr: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    tids: np.ndarray
    n_terms: int
    term_mats: list
    channels: list
    ports: dict
    seg_template: np.ndarray
    slot_axes: list = field(default_factory=list)

    @property
    def dim(self):
        return len(self.d0)

    def seg(self, t0, alpha0, drive):
        s = self.seg_template.copy()
        s[0] = t0
        s[1] = alpha0.real
        s[2] = alpha0.imag
        s[3] = drive
        return s

    def heff(self, coef, scalar):
        """Sparse H_eff for given coefficient values."""
        H = sp.diags(self.d0 + scalar, format="csr")
        for j, M in enumerate(self.term_mats):
            if M is not None and coef[j] != 0:
                H = H + coef[j] * M
        return H.tocsr()

    def detected(self):
        return [c for c in self.channels if c.detected]


def build_operators(model):
    """Assemble :class:`Operators`; raises :class:`DimensionError` over budget."""
    dims = model.dims
    D = model.dim
    if D > model.dim_budget:
        raise DimensionError(
            f"composite dimension {D} ({' x '.join(map(str, dims))}) exceeds budget {model.dim_budget}")
    K = model.n_slots
    sch = model.scheme
    iv, ih = K, K + 1
    displaced = model.frame == "displaced"

    a_v = embed(destroy(dims[iv]), iv, dims)
    a_h = embed(destroy(dims[ih]), ih, dims)
    n_v = (a_v.T @ a_v).diagonal()
    n_h = (a_h.T @ a_h).diagonal()

    d0 = (model.delta_c - 1j * model.kappa) * (n_v + n_h)
    d0 = d0.astype(complex)
    energies = sch.energies
    exc = sch.excited_mask.astype(float)
    for i in range(K):
        diag_atom = energies + (model.delta_a - 0.5j * model.gamma) * exc
        d0 = d0 + embed(sp.diags(diag_atom), i, dims).diagonal()

    D0 = sch.lowering(0)
    DH = (sch.lowering(-1) - sch.lowering(1)) / sqrt(2.0)

    term_mats = []
    for i in range(K):
        d0_i = embed(D0, i, dims)
        dh_i = embed(DH, i, dims)
        K_i = a_v.T @ d0_i + a_h.T @ dh_i
        K_i = (K_i + K_i.conj().T).tocsr()
        term_mats.append(K_i)
        term_mats.append(d0_i.conj().T.tocsr() if displaced else None)
        term_mats.append(d0_i.tocsr() if displaced else None)

    U = homodyne_mixing(model.theta_h)
    effs = (model.eff_h, model.eff_v)
    s_h = sum(effs[k] * U[k, 1] * U[k, 0] for k in range(2))
    s_v = sum(effs[k] * U[k, 1] ** 2 for k in range(2))
    if displaced:
        term_mats.append(None)
        term_mats.append(a_h.tocsr() if s_h != 0 else None)
        term_mats.append(a_v.tocsr() if s_v != 0 else None)
    else:
        term_mats.append((a_v.T - a_v).tocsr())
        term_mats.append(None)
        term_mats.append(None)
    n_terms = len(term_mats)

    rows, cols, vals, tids = [], [], [], []
    for j, M in enumerate(term_mats):
        if M is None:
            continue
        C = M.tocoo()
        keep = C.data != 0
        rows.append(C.row[keep])
        cols.append(C.col[keep])
        vals.append(C.data[keep].astype(complex))
        tids.append(np.full(keep.sum(), j, dtype=np.int64))
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        tids = np.concatenate(tids)
    else:
        rows = np.zeros(0, np.int64)
        cols = np.zeros(0, np.int64)
        vals = np.zeros(0, complex)
        tids = np.zeros(0, np.int64)
    order = np.lexsort((cols, rows))
    rows, cols, vals, tids = rows[order], cols[order], vals[order], tids[order]
    indptr = np.zeros(D + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)

    channels = []
    ports = {}
    port_names = ("H", "V")
    for k in range(2):
        c_k = (U[k, 0] * a_h + U[k, 1] * a_v).tocsr()
        c_k.eliminate_zeros()
        eta = effs[k]
        beta_unit = sqrt(2.0 * model.kappa * eta) * U[k, 1] if displaced else 0.0
        ports[port_names[k]] = (c_k, U[k, 1] if displaced else 0.0)
        if eta > 0 and (c_k.nnz > 0 or beta_unit != 0):
            channels.append(Channel(port_names[k], sqrt(2.0 * model.kappa * eta) * c_k,
                                    beta_unit, True))
        if eta < 1 and c_k.nnz > 0:
            channels.append(Channel("loss_" + port_names[k],
                                    sqrt(2.0 * model.kappa * (1.0 - eta)) * c_k))
    for i in range(K):
        for q in (-1, 0, 1):
            Lq = sch.decay(q)
            if Lq.nnz == 0:
                continue
            channels.append(Channel(f"side{q:+d}_{i}", sqrt(model.gamma) * embed(Lq, i, dims)))

    seg = np.array([0.0, 0.0, 0.0, model.drive, model.kappa, model.delta_c,
                    1.0 if displaced else 0.0, s_h, s_v])
    return Operators(model, dims, d0, indptr, cols.astype(np.int64), vals, tids, n_terms,
                     term_mats, channels, ports, seg, slot_axes=list(range(K)))


def hermitian_part(H):
    return ((H + H.conj().T) / 2).tocsr()


def basis_state(model, atom_levels, n_v=0, n_h=0):
    """Product basis vector for given slot levels and photon numbers."""
    dims = model.dims
    idx = 0
    digits = list(atom_levels) + [n_v, n_h]
    for d, x in zip(dims, digits):
        idx = idx * d + x
    psi = np.zeros(model.dim, complex)
    psi[idx] = 1.0
    return psi


def product_state(model, atom_states, v_state=None, h_state=None):
    """Tensor product of per-slot atom vectors and mode vectors."""
    dims = model.dims
    vecs = [np.asarray(a, complex) for a in atom_states]
    for d, st in ((dims[-2], v_state), (dims[-1], h_state)):
        if st is None:
            st = np.zeros(d, complex)
            st[0] = 1.0
        vecs.append(np.asarray(st, complex))
    out = vecs[0]
    for v in vecs[1:]:
        out = np.kron(out, v)
    return out


def reduced_atom(rho_or_psi, model, slot=0):
    """Reduced density matrix of one atom slot from a state vector or density matrix."""
    dims = model.dims
    n = len(dims)
    x = np.asarray(rho_or_psi)
    if x.ndim == 1:
        t = x.reshape(dims)
        t = np.moveaxis(t, slot, 0).reshape(dims[slot], -1)
        return t @ t.conj().T
    t = x.reshape(dims + dims)
    t = np.moveaxis(t, [slot, n + slot], [0, n])
    d = dims[slot]
    rest = int(np.prod(dims)) // d
    t = t.reshape(d, rest, d, rest)
    return np.einsum("iaja->ij", t)


def is_four_level(model):
    return isinstance(model.scheme, FourLevelScheme)
