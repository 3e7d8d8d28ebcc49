"""Hot kernels: no-jump propagation and pair histogramming.

The primitives come from :mod:`qbeat._loops` (numba) or :mod:`qbeat._vector`
(numpy) depending on ``QBEAT_DISABLE_NUMBA``; the algorithms below are shared
and resolve the primitives from module globals, so under numba they compile
against the loop versions.

No-jump evolution uses an integrating-factor (Lawson) Dormand-Prince 5(4)
scheme: the diagonal part of the generator (Zeeman, detunings, cavity and
spontaneous decay) is exponentiated exactly and only the off-diagonal,
time-dependent couplings go through the Runge-Kutta stages. Jump times are
located by bisection on the continuous extension of the step.
"""
import numpy as np

from ._jit import jit, USE_NUMBA, BACKEND

if USE_NUMBA:
    from ._loops import (heff_offdiag, lincomb, mul, div, exp_diag, norm2, err_norm,
                         csr_apply_norm2, pair_histogram)
else:
    from ._vector import (heff_offdiag, lincomb, mul, div, exp_diag, norm2, err_norm,
                          csr_apply_norm2, pair_histogram)

__all__ = ["BACKEND", "alpha_at", "coupling_at", "coefficients", "propagate",
           "pair_histogram", "csr_apply_norm2", "STATUS_END", "STATUS_JUMP"]

STATUS_END = 0
STATUS_JUMP = 1

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0],
], dtype=float)
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_DENSE = np.array([-12715105075 / 11282082432, 0, 87487479700 / 32700410799,
                   -10690763975 / 1880347072, 701980252875 / 199316789632,
                   -1453857185 / 822651844, 69997945 / 29380423])
# distinct nonzero stage times -> index into the exponential cache
_CIDX = np.array([-1, 0, 1, 2, 3, 4, 4])
_CVALS = np.array([1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])

# seg layout
SEG_T0, SEG_A0R, SEG_A0I, SEG_E, SEG_KAPPA, SEG_DC, SEG_DISPLACED, SEG_SH, SEG_SV = range(9)
# slot layout
(SL_ACTIVE, SL_GMAX, SL_TC, SL_V, SL_RHO0, SL_PHASE0, SL_TILT, SL_W, SL_K,
 SL_HALFWIN) = range(10)
SLOT_COLS = 10


@jit
def alpha_at(t, seg):
    """Empty-cavity coherent amplitude at ``t`` for a constant drive since seg[t0]."""
    lam = seg[SEG_KAPPA] + 1j * seg[SEG_DC]
    a_ss = seg[SEG_E] / lam
    a0 = seg[SEG_A0R] + 1j * seg[SEG_A0I]
    return a_ss + (a0 - a_ss) * np.exp(-lam * (t - seg[SEG_T0]))


@jit
def coupling_at(t, slot):
    """g(t) for a straight-line transit through a Gaussian standing-wave mode."""
    if slot[SL_ACTIVE] == 0.0:
        return 0.0
    s = t - slot[SL_TC]
    if abs(s) > slot[SL_HALFWIN]:
        return 0.0
    v = slot[SL_V]
    w = slot[SL_W]
    y = v * np.cos(slot[SL_TILT]) * s
    rho2 = slot[SL_RHO0] ** 2 + y * y
    z_phase = slot[SL_PHASE0] + slot[SL_K] * v * np.sin(slot[SL_TILT]) * s
    return slot[SL_GMAX] * np.exp(-rho2 / (w * w)) * np.cos(z_phase)


@jit
def coefficients(t, seg, slots, coef):
    """Fill term coefficients c_j(t); return the scalar s(t)."""
    K = slots.shape[0]
    displaced = seg[SEG_DISPLACED] != 0.0
    alpha = alpha_at(t, seg) if displaced else 0j
    for i in range(K):
        g = coupling_at(t, slots[i])
        coef[3 * i] = g
        coef[3 * i + 1] = g * alpha
        coef[3 * i + 2] = g * np.conj(alpha)
    if displaced:
        coef[3 * K] = 0.0
        coef[3 * K + 1] = -2j * seg[SEG_KAPPA] * seg[SEG_SH] * np.conj(alpha)
        coef[3 * K + 2] = -2j * seg[SEG_KAPPA] * seg[SEG_SV] * np.conj(alpha)
        return -1j * seg[SEG_KAPPA] * seg[SEG_SV] * (alpha.real ** 2 + alpha.imag ** 2)
    coef[3 * K] = 1j * seg[SEG_E]
    coef[3 * K + 1] = 0.0
    coef[3 * K + 2] = 0.0
    return 0j


@jit
def _rhs(t, x, gen, indptr, cols, vals, tids, seg, slots, coef, out):
    scalar = coefficients(t, seg, slots, coef)
    heff_offdiag(x, scalar, gen, indptr, cols, vals, tids, coef, out)


@jit
def _dense(theta, ks, y0, y1, h, dcoef, out):
    # Hairer's continuous extension for DOPRI5, in the transformed variable
    n = y0.shape[0]
    for i in range(n):
        r2 = y1[i] - y0[i]
        r3 = h * ks[0, i] - r2
        r4 = r2 - h * ks[6, i] - r3
        r5 = 0j
        for j in range(7):
            if dcoef[j] != 0.0:
                r5 += dcoef[j] * ks[j, i]
        r5 *= h
        out[i] = y0[i] + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)))


@jit
def _state_at(theta, ks, y0, y1, h, dcoef, gen, tmp, out):
    _dense(theta, ks, y0, y1, h, dcoef, tmp)
    exp_diag(out, gen, theta * h)
    mul(out, out, tmp)


@jit
def propagate(psi, t, t_end, thr, h, gen, indptr, cols, vals, tids, seg, slots,
              rtol, atol, h_max, cache_h, Ecache, Einv, coef,
              obs_t, obs_out, obs_pos, oindptr, ocols, ovals, obs_u, obs_w):
    """Advance the unnormalized state from ``t`` toward ``t_end``.

    Stops early when the squared norm falls to ``thr`` (jump time located by
    bisection on the dense output). Observation times ``obs_t[obs_pos:]`` that
    are passed are filled into ``obs_out`` with the normalized intensity
    obs_w * ||(M_obs + obs_u * alpha(t)) psi||^2 / ||psi||^2.

    Returns (status, t, h_next, obs_pos, n_steps, n_norm_violations).
    """
    n = psi.shape[0]
    ks = np.empty((7, n), dtype=np.complex128)
    ystage = np.empty(n, dtype=np.complex128)
    u = np.empty(n, dtype=np.complex128)
    w = np.empty(n, dtype=np.complex128)
    y5 = np.empty(n, dtype=np.complex128)
    ev = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    xi = np.empty(n, dtype=np.complex128)
    zvec = np.zeros(n, dtype=np.complex128)
    n_steps = 0
    n_viol = 0
    nobs = obs_t.shape[0]
    displaced = seg[SEG_DISPLACED] != 0.0
    norm_prev = norm2(psi)
    if norm_prev <= thr:
        return STATUS_JUMP, t, h, obs_pos, n_steps, n_viol
    _rhs(t, psi, gen, indptr, cols, vals, tids, seg, slots, coef, ks[0])
    hi = 1.0
    while t < t_end:
        hh = min(h, h_max, t_end - t)
        if t_end - (t + hh) < 1e-12:
            hh = t_end - t
        if hh <= 0.0:
            break
        if cache_h[0] != hh:
            for c in range(5):
                exp_diag(Ecache[c], gen, _CVALS[c] * hh)
                Einv[c, :] = 1.0 / Ecache[c, :]
            cache_h[0] = hh
        for s in range(1, 7):
            lincomb(ystage, psi, hh, _A[s], ks, s)
            ci = _CIDX[s]
            mul(u, Ecache[ci], ystage)
            _rhs(t + _C[s] * hh, u, gen, indptr, cols, vals, tids, seg, slots, coef, w)
            mul(ks[s], Einv[ci], w)
        y5[:] = ystage
        lincomb(ev, zvec, hh, _E, ks, 7)
        err = err_norm(ev, psi, y5, atol, rtol)
        if err > 1.0:
            h = hh * max(0.2, 0.9 * err ** -0.2)
            continue
        n_steps += 1
        # accepted: psi(t+hh) = E(hh) * y5 ; ks[6] = f(hh, y5) (FSAL)
        mul(xi, Ecache[4], y5)
        norm_new = norm2(xi)
        if norm_new > norm_prev * (1.0 + 1e-10) + 1e-300:
            n_viol += 1
        t_jump = -1.0
        if norm_new <= thr:
            lo = 0.0
            hi = 1.0
            while (hi - lo) * hh > 1e-7:
                mid = 0.5 * (lo + hi)
                _state_at(mid, ks, psi, y5, hh, _DENSE, gen, tmp, u)
                if norm2(u) > thr:
                    lo = mid
                else:
                    hi = mid
            t_jump = t + hi * hh
        t_stop = t_jump if t_jump >= 0.0 else t + hh
        while obs_pos < nobs and obs_t[obs_pos] <= t_stop:
            theta = (obs_t[obs_pos] - t) / hh
            if theta < 0.0:
                theta = 0.0
            _state_at(theta, ks, psi, y5, hh, _DENSE, gen, tmp, u)
            beta = 0j
            if displaced:
                beta = obs_u * alpha_at(obs_t[obs_pos], seg)
            nrm = norm2(u)
            obs_out[obs_pos] = obs_w * csr_apply_norm2(u, beta, oindptr, ocols, ovals) / nrm
            obs_pos += 1
        if t_jump >= 0.0:
            _state_at(hi, ks, psi, y5, hh, _DENSE, gen, tmp, u)
            psi[:] = u
            return STATUS_JUMP, t_jump, hh, obs_pos, n_steps, n_viol
        psi[:] = xi
        mul(ks[0], Ecache[4], ks[6])
        norm_prev = norm_new
        t = t + hh
        if err < 1e-10:
            h = hh * 5.0
        else:
            h = hh * min(5.0, max(0.2, 0.9 * err ** -0.2))
    return STATUS_END, t, h, obs_pos, n_steps, n_viol
