"""Vectorized numpy primitives with the same signatures as :mod:`qbeat._loops`."""
import numpy as np


def heff_offdiag(x, scalar, d0, indptr, cols, vals, tids, coef, out):
    prod = coef[tids] * vals * x[cols]
    acc = np.zeros(x.shape[0], dtype=complex)
    if prod.size:
        counts = np.diff(indptr)
        nz = counts > 0
        acc[nz] = np.add.reduceat(prod, indptr[:-1][nz])
    out[:] = -1j * (acc + scalar * x)


def lincomb(out, y0, h, a, ks, nst):
    out[:] = y0 + h * (a[:nst] @ ks[:nst])


def mul(out, e, x):
    np.multiply(e, x, out=out)


def div(out, x, e):
    np.divide(x, e, out=out)


def exp_diag(out, gen, tau):
    np.exp(gen * tau, out=out)


def norm2(x):
    return float(np.vdot(x, x).real)


def err_norm(e, y0, y1, atol, rtol):
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((np.abs(e) / sc) ** 2)))


def csr_apply_norm2(x, beta, indptr, cols, vals):
    prod = vals * x[cols]
    acc = beta * x
    if prod.size:
        counts = np.diff(indptr)
        nz = counts > 0
        acc = acc.copy()
        acc[nz] += np.add.reduceat(prod, indptr[:-1][nz])
    return float(np.vdot(acc, acc).real)


def pair_histogram(heralds, targets, bin_width, n_bins, counts):
    max_tau = n_bins * bin_width
    lo = np.searchsorted(targets, heralds, side="right")
    hi = np.searchsorted(targets, heralds + max_tau, side="right")
    n = hi - lo
    if n.sum() == 0:
        return
    idx = np.repeat(lo - np.cumsum(np.r_[0, n[:-1]]), n) + np.arange(n.sum())
    tau = targets[idx] - np.repeat(heralds, n)
    k = np.maximum(np.ceil(tau / bin_width).astype(np.int64) - 1, 0)
    k = k[k < n_bins]
    counts += np.bincount(k, minlength=n_bins)[:n_bins]
