"""Dense Lindblad integration used as an oracle for the trajectory unravelling.

drho/dt = -i (H_eff rho - rho H_eff^dag) + sum_c L_c rho L_c^dag

with the same H_eff(t) and jump operators L_c(t) as the trajectory engine,
so any frame choice made there is inherited consistently.
"""
import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import splu

from . import kernels as K
from .beam import static_row
from .model import build_operators


class OracleBudgetError(ValueError):
    pass


class MasterEquation:
    """Time-dependent Lindblad generator for a constant-coupling model."""

    def __init__(self, model, couplings=None, budget=512, ops=None):
        if model.dim > budget:
            raise OracleBudgetError(f"dimension {model.dim} exceeds oracle budget {budget}")
        self.model = model
        self.ops = ops if ops is not None else build_operators(model)
        gs = [model.g_max] * model.n_slots if couplings is None else list(couplings)
        self.slots = np.array([static_row(g) for g in gs]).reshape(model.n_slots, K.SLOT_COLS)
        self._coef = np.zeros(self.ops.n_terms, complex)
        self.displaced = model.frame == "displaced"

    def seg(self, t0, alpha0, mult=1.0):
        return self.ops.seg(t0, complex(alpha0), self.model.drive * mult)

    def alpha_ss(self, mult=1.0):
        m = self.model
        return m.drive * mult / (m.kappa + 1j * m.delta_c)

    def heff(self, t, seg):
        scalar = K.coefficients(t, seg, self.slots, self._coef)
        return self.ops.heff(self._coef.copy(), scalar)

    def jump_ops(self, t, seg):
        a = K.alpha_at(t, seg) if self.displaced else 0j
        out = []
        for c in self.ops.channels:
            L = c.op
            if c.beta != 0:
                L = L + (c.beta * a) * sp.identity(self.ops.dim, format="csr")
            out.append(L.tocsr())
        return out

    def rhs(self, t, rho, seg):
        H = self.heff(t, seg)
        Hr = H @ rho
        d = -1j * (Hr - Hr.conj().T)
        for L in self.jump_ops(t, seg):
            LR = L @ rho
            d += (L @ LR.conj().T).conj().T
        # exact Hermitian symmetry keeps every Runge-Kutta stage Hermitian to roundoff
        return 0.5 * (d + d.conj().T)

    def liouvillian(self, seg, t=0.0):
        """Sparse superoperator (column stacking) at time ``t``."""
        n = self.ops.dim
        I = sp.identity(n, format="csr")
        H = self.heff(t, seg)
        Lv = -1j * sp.kron(I, H) + 1j * sp.kron(H.conj(), I)
        for L in self.jump_ops(t, seg):
            Lv = Lv + sp.kron(L.conj(), L)
        return Lv.tocsc()

    def steady_state(self):
        """Steady state for the constant drive (alpha held at its steady value)."""
        n = self.ops.dim
        seg = self.seg(0.0, self.alpha_ss())
        Lv = self.liouvillian(seg).tolil()
        # replace the first equation by the trace condition
        tr = np.zeros(n * n, complex)
        tr[np.arange(n) * (n + 1)] = 1.0
        Lv[0, :] = tr
        b = np.zeros(n * n, complex)
        b[0] = 1.0
        try:
            x = splu(Lv.tocsc()).solve(b)
        except RuntimeError:
            x = None
        if x is None or not np.all(np.isfinite(x)):
            raise ValueError("steady state is not unique (singular Liouvillian)")
        rho = x.reshape(n, n, order="F")
        rho = 0.5 * (rho + rho.conj().T)
        return rho / np.trace(rho).real

    def evolve(self, rho0, t_grid, t0=0.0, alpha0=None, schedule=(), rtol=1e-9, atol=1e-11):
        """Integrate from ``t0`` and return rho at each time in ``t_grid``.

        ``schedule`` is a sequence of (start, end, multiplier) drive windows;
        alpha is continuous across their edges.
        """
        t_grid = np.asarray(t_grid, float)
        n = self.ops.dim
        a0 = self.alpha_ss() if alpha0 is None else alpha0
        edges = sorted({e for s, en, _ in schedule for e in (s, en) if e > t0})

        def mult_at(t):
            for s, e, m in schedule:
                if s <= t < e:
                    return m
            return 1.0

        out = np.empty((len(t_grid), n, n), complex)
        rho = np.asarray(rho0, complex).copy()
        t = t0
        seg = self.seg(t, a0, mult_at(t))
        bounds = [b for b in edges if b < t_grid[-1]] + [t_grid[-1]]
        gi = 0
        while gi < len(t_grid) and t_grid[gi] <= t:
            out[gi] = rho
            gi += 1
        for b in bounds:
            if b <= t:
                continue
            sel = (t_grid > t) & (t_grid <= b)
            ts = t_grid[sel]
            s_ = seg

            def f(tt, y):
                return self.rhs(tt, y.reshape(n, n), s_).reshape(-1)

            sol = solve_ivp(f, (t, b), rho.reshape(-1), method="DOP853", t_eval=ts if len(ts) else None,
                            rtol=rtol, atol=atol)
            if not sol.success:
                raise RuntimeError(sol.message)
            for k in range(len(ts)):
                out[gi] = sol.y[:, k].reshape(n, n)
                gi += 1
            rho = sol.y[:, -1].reshape(n, n) if len(sol.t) else rho
            if len(ts) and ts[-1] != b:
                # t_eval did not include the boundary: integrate the remainder
                sol2 = solve_ivp(f, (ts[-1], b), rho.reshape(-1), method="DOP853", rtol=rtol, atol=atol)
                rho = sol2.y[:, -1].reshape(n, n)
            a = K.alpha_at(b, seg) if self.displaced else 0j
            t = b
            seg = self.seg(t, a, mult_at(t))
        return out


def master_equation_oracle(model, t_grid, rho0, couplings=None, budget=512, **kw):
    """Density matrices at ``t_grid`` for a constant-coupling model."""
    me = MasterEquation(model, couplings, budget)
    return me.evolve(rho0, t_grid, **kw)


def trace_distance(a, b):
    ev = np.linalg.eigvalsh(0.5 * ((a - b) + (a - b).conj().T))
    return 0.5 * np.abs(ev).sum()
