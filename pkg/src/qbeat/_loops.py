"""Loop-form primitives compiled by numba."""
import numpy as np

from ._jit import jit


@jit
def heff_offdiag(x, scalar, d0, indptr, cols, vals, tids, coef, out):
    # out = -i * (H_eff - diag(d0)) x, i.e. the non-diagonal part of the generator
    n = x.shape[0]
    for r in range(n):
        acc = scalar * x[r]
        for p in range(indptr[r], indptr[r + 1]):
            acc += coef[tids[p]] * vals[p] * x[cols[p]]
        out[r] = -1j * acc


@jit
def lincomb(out, y0, h, a, ks, nst):
    n = y0.shape[0]
    for i in range(n):
        acc = 0j
        for j in range(nst):
            if a[j] != 0.0:
                acc += a[j] * ks[j, i]
        out[i] = y0[i] + h * acc


@jit
def mul(out, e, x):
    for i in range(x.shape[0]):
        out[i] = e[i] * x[i]


@jit
def div(out, x, e):
    for i in range(x.shape[0]):
        out[i] = x[i] / e[i]


@jit
def exp_diag(out, gen, tau):
    for i in range(gen.shape[0]):
        out[i] = np.exp(gen[i] * tau)


@jit
def norm2(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i].real * x[i].real + x[i].imag * x[i].imag
    return s


@jit
def err_norm(e, y0, y1, atol, rtol):
    n = e.shape[0]
    s = 0.0
    for i in range(n):
        sc = atol + rtol * max(abs(y0[i]), abs(y1[i]))
        r = abs(e[i]) / sc
        s += r * r
    return np.sqrt(s / n)


@jit
def csr_apply_norm2(x, beta, indptr, cols, vals):
    # ||(M + beta) x||^2
    n = x.shape[0]
    s = 0.0
    for r in range(n):
        acc = beta * x[r]
        for p in range(indptr[r], indptr[r + 1]):
            acc += vals[p] * x[cols[p]]
        s += acc.real * acc.real + acc.imag * acc.imag
    return s


@jit
def pair_histogram(heralds, targets, bin_width, n_bins, counts):
    """Add ordered pairs (herald, target) with 0 < tau <= n_bins*bin_width into counts."""
    max_tau = n_bins * bin_width
    j0 = 0
    nt = targets.shape[0]
    for i in range(heralds.shape[0]):
        th = heralds[i]
        while j0 < nt and targets[j0] <= th:
            j0 += 1
        j = j0
        while j < nt:
            if targets[j] > th + max_tau:
                break
            tau = targets[j] - th
            k = int(np.ceil(tau / bin_width)) - 1
            if k < 0:
                k = 0
            if k < n_bins:
                counts[k] += 1
            j += 1
