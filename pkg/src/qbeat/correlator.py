"""Conditional intensity correlations from click records or direct state records."""
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .kernels import pair_histogram
from .trajectory import CHANNELS
from .model import homodyne_mixing


@dataclass(frozen=True)
class DetectionBasis:
    """Detected port as a mixture of the H and V cavity modes.

    The detected field is ``c = u_H a_H + u_V a_V``; ``u_V`` admits drive light
    and turns intensity beats at 2x Larmor into field beats at 1x Larmor.
    """
    theta_h: float = 0.0
    port: str = "H"

    @property
    def weights(self):
        U = homodyne_mixing(self.theta_h)
        k = CHANNELS.index(self.port)
        return U[k, 0], U[k, 1]


def homodyne_basis(theta_h_deg, port="H"):
    return DetectionBasis(float(theta_h_deg), port)


@dataclass
class CorrelationEstimate:
    """g2 on a tau grid. ``status`` is "ok" or "empty" (no heralds / no targets).

    ``stderr`` is zero only on empty bins or for the exact (noise-free) method.
    """
    tau: np.ndarray
    g2: np.ndarray
    stderr: np.ndarray
    n_heralds: int = 0
    status: str = "ok"
    method: str = "clicks"
    counts: np.ndarray = None
    empty_bins: np.ndarray = field(default=None)
    # per-batch partial sums (num (B, n_tau), den (B,)) with g2 = sum(num) / sum(den)
    batches: tuple = None

    @property
    def ok(self):
        return self.status == "ok"


def _empty(tau, method):
    z = np.zeros(len(tau))
    return CorrelationEstimate(np.asarray(tau, float), np.full(len(tau), np.nan), z, 0, "empty",
                               method, z.astype(np.int64), np.ones(len(tau), bool))


def armed_heralds(times, dead):
    """Heralds that trigger: each armed click blocks re-arming for ``dead``."""
    if dead <= 0 or len(times) == 0:
        return times
    keep = []
    until = -np.inf
    for t in times:
        if t >= until:
            keep.append(t)
            until = t + dead
    return np.asarray(keep, float)


def _dark_time(windows, lo, hi):
    d = 0.0
    for s, e in windows:
        d += max(0.0, min(e, hi) - max(s, lo))
    return d


def g2_from_clicks(record, bin_width, max_tau, herald="H", target="H", arm_dead=0.0):
    """Multi-start multi-stop histogram of (target - herald) delays.

    Pairs are formed within a trajectory only, and only heralds whose whole
    delay range fits inside their trajectory span count. The flat level is
    the mean target rate outside feedback windows times the herald count
    times the bin width. ``arm_dead`` restricts heralds to those that would
    arm the feedback (latency + window length after the previous armed one).
    """
    if bin_width <= 0 or max_tau <= 0:
        raise ValueError("bin_width and max_tau must be positive")
    n_bins = int(round(max_tau / bin_width))
    tau = (np.arange(n_bins) + 0.5) * bin_width
    counts = np.zeros(n_bins, np.int64)
    hc, tc = CHANNELS.index(herald), CHANNELS.index(target)
    n_her = 0
    n_tgt = 0
    lit = 0.0
    times, chans, ids = record.times, record.channels, record.trajectory_ids
    order = np.lexsort((times, ids))
    times, chans, ids = times[order], chans[order], ids[order]
    windows = {}
    for i, s, e in record.dark_windows:
        windows.setdefault(i, []).append((s, e))
    bounds = np.searchsorted(ids, [s[0] for s in record.spans], side="left")
    ends = np.searchsorted(ids, [s[0] for s in record.spans], side="right")
    for (tid, t0, t1), lo, hi in zip(record.spans, bounds, ends):
        tt, cc = times[lo:hi], chans[lo:hi]
        her = tt[cc == hc]
        her = armed_heralds(her, arm_dead)
        her = her[(her >= t0) & (her + n_bins * bin_width <= t1)]
        tgt = tt[cc == tc]
        win = windows.get(tid, [])
        in_dark = np.zeros(len(tgt), bool)
        for s, e in win:
            in_dark |= (tgt >= s) & (tgt < e)
        n_tgt += int((~in_dark).sum())
        lit += (t1 - t0) - _dark_time(win, t0, t1)
        n_her += len(her)
        if len(her) and len(tgt):
            pair_histogram(her, tgt, bin_width, n_bins, counts)
    if n_her == 0 or n_tgt == 0 or lit <= 0:
        return _empty(tau, "clicks")
    norm = n_her * (n_tgt / lit) * bin_width
    g2 = counts / norm
    err = np.sqrt(counts) / norm
    return CorrelationEstimate(tau, g2, err, n_her, "ok", "clicks", counts, counts == 0)


N_BATCHES = 20


def batch_sums(num, den, n_batches=N_BATCHES):
    """Partial sums of per-trajectory ``num`` and ``den`` over contiguous batches."""
    N = num.shape[0]
    edges = np.linspace(0, N, min(n_batches, N) + 1).astype(int)
    nums = np.array([num[a:b].sum(axis=0) for a, b in zip(edges[:-1], edges[1:])])
    dens = np.array([den[a:b].sum() for a, b in zip(edges[:-1], edges[1:])], float)
    return nums, dens


def _batch_stderr(num, den, n_batches=N_BATCHES):
    """Standard error of sum(num)/sum(den) from contiguous trajectory batches."""
    nums, dens = batch_sums(num, den, n_batches)
    ok = dens > 0
    if ok.sum() < 2:
        return np.zeros(num.shape[1:])
    vals = nums[ok] / dens[ok].reshape((-1,) + (1,) * (nums.ndim - 1))
    return vals.std(axis=0, ddof=1) / np.sqrt(len(vals))


def g2_direct_ensemble(result):
    """Conditional intensity records from an ensemble, normalized by the mean lattice intensity."""
    tau = result.taus
    n = int(result.n_records.sum())
    norm_n = result.norm_n.sum()
    if n == 0 or norm_n == 0:
        return _empty(tau, "direct")
    mean_i = result.norm_sum.sum() / norm_n
    if mean_i <= 0:
        return _empty(tau, "direct")
    g2 = result.rec_sum.sum(axis=0) / n / mean_i
    err = _batch_stderr(result.rec_sum, result.n_records) / mean_i
    nums, dens = batch_sums(result.rec_sum / mean_i, result.n_records)
    return CorrelationEstimate(tau, g2, err, n, "ok", "direct", batches=(nums, dens))


def g2_direct_exact(me, tau, herald="H", target="H", schedule=(), latency=0.0):
    """Noise-free conditional g2 from the master equation.

    Starts in the steady state, applies the herald collapse at t=0, evolves
    under the (optionally feedback-modified) drive and returns
    <L_t^dag L_t>(tau) / <L_t^dag L_t>_ss.
    """
    tau = np.asarray(tau, float)
    rho = me.steady_state()
    a_ss = me.alpha_ss()
    port = {c.label: c for c in me.ops.channels}
    Lh, Lt = port[herald], port[target]

    def op(c, a):
        M, shift = c.at(a)
        return M.toarray() + shift * np.eye(M.shape[0])

    A = op(Lh, a_ss)
    r1 = A @ rho @ A.conj().T
    p = np.trace(r1).real
    if p <= 0:
        return _empty(tau, "exact")
    r1 /= p
    B = op(Lt, a_ss)
    i_ss = np.trace(B.conj().T @ B @ rho).real
    grid = np.r_[0.0, tau] if tau[0] > 0 else tau
    rhos = me.evolve(r1, grid, alpha0=a_ss, schedule=schedule)
    if tau[0] > 0:
        rhos = rhos[1:]
    g2 = np.empty(len(tau))
    # alpha along the evolution, rebuilt the way the oracle chains drive segments
    alphas = _alpha_track(me, tau, a_ss, schedule)
    for k in range(len(tau)):
        Bk = op(Lt, alphas[k])
        g2[k] = np.trace(Bk.conj().T @ Bk @ rhos[k]).real / i_ss
    return CorrelationEstimate(tau, g2, np.zeros(len(tau)), 1, "ok", "exact")


def _alpha_track(me, tau, a0, schedule):
    if not me.displaced:
        return np.zeros(len(tau), complex)
    edges = sorted({e for s, en, _ in schedule for e in (s, en) if e > 0})

    def mult_at(t):
        for s, e, m in schedule:
            if s <= t < e:
                return m
        return 1.0

    segs = [(0.0, me.seg(0.0, a0, mult_at(0.0)))]
    for b in edges:
        a = K.alpha_at(b, segs[-1][1])
        segs.append((b, me.seg(b, a, mult_at(b))))
    out = np.empty(len(tau), complex)
    starts = [s for s, _ in segs]
    for k, t in enumerate(tau):
        j = int(np.searchsorted(starts, t, side="right")) - 1
        out[k] = K.alpha_at(t, segs[j][1])
    return out


def fft_peak(tau, y, resolution=0.1, f_min=None):
    """Dominant frequency (MHz) of y - mean(y) on a zero-padded grid of ``resolution`` MHz.

    Returns (frequency, spectrum_freqs, power). The DC bin, and anything below
    ``f_min`` (defaults to one resolution step), is excluded.
    """
    tau = np.asarray(tau, float)
    y = np.asarray(y, float)
    dt = float(np.median(np.diff(tau)))
    n = max(len(y), int(np.ceil(1.0 / (resolution * dt))))
    spec = np.abs(np.fft.rfft(y - y.mean(), n=n)) ** 2
    f = np.fft.rfftfreq(n, dt)
    lo = resolution if f_min is None else f_min
    mask = f >= lo - 1e-12
    k = int(np.argmax(np.where(mask, spec, -1.0)))
    return float(f[k]), f, spec


def snap_to_bin(freq, resolution=0.1):
    return round(round(freq / resolution) * resolution, 10)
