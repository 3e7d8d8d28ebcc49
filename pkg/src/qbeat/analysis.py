"""Damped-sinusoid fits and the two parameter scans (feedback intensity, photon number)."""
from dataclasses import dataclass, field, replace
from math import pi

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import hilbert

from .correlator import CorrelationEstimate, fft_peak

PARAMS = ("offset", "amplitude", "decay", "freq", "phase")
MAX_ITER = 200


class FitError(ValueError):
    pass


def wrap_phase(phi):
    """Map to (-pi, pi]."""
    w = np.mod(np.asarray(phi, float) + pi, 2 * pi) - pi
    w = np.where(w == -pi, pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass
class BeatFit:
    """y = offset + A exp(-decay tau) cos(2 pi freq tau + phase), tau relative to ``origin``."""
    offset: float
    amplitude: float
    decay: float
    freq: float
    phase: float
    errors: dict
    window: tuple
    converged: bool
    residual: float
    freq_identifiable: bool = True
    origin: float = 0.0
    n_points: int = 0
    message: str = ""
    drift: float = 0.0

    def model(self, tau):
        s = np.asarray(tau, float) - self.origin
        return damped_cosine(s, self.offset, self.amplitude, self.decay, self.freq, self.phase, self.drift)

    @property
    def phase0(self):
        """Phase back-propagated to tau = 0."""
        return wrap_phase(self.phase - 2 * pi * self.freq * self.origin)

    def err(self, name):
        return self.errors.get(name, np.nan)


def damped_cosine(tau, c, A, G, f, phi, drift=0.0):
    return c + drift * tau + A * np.exp(-G * tau) * np.cos(2 * pi * f * tau + phi)


def _jac(p, s, w):
    c, A, G, f, phi = p[:5]
    e = np.exp(-G * s)
    arg = 2 * pi * f * s + phi
    co, si = np.cos(arg), np.sin(arg)
    J = np.empty((len(s), len(p)))
    J[:, 0] = 1.0
    J[:, 1] = e * co
    J[:, 2] = -A * s * e * co
    J[:, 3] = -A * e * si * 2 * pi * s
    J[:, 4] = -A * e * si
    if len(p) > 5:
        J[:, 5] = s
    return J * w[:, None]


def canonical(c, A, G, f, phi):
    """A >= 0, f >= 0, phase in (-pi, pi]."""
    if f < 0:
        f, phi = -f, -phi
    if A < 0:
        A, phi = -A, phi + pi
    return c, A, G, f, wrap_phase(phi)


def initial_guess(s, y, f_band=None, drift=False):
    """FFT peak for f, log envelope for (A, decay), quadrature projection for phase.

    ``f_band`` = (lo, hi) MHz restricts the peak search; with ``drift`` a
    straight line is removed first and its slope returned as a sixth entry.
    """
    if drift:
        d, c = np.polyfit(s, y, 1)
        y = y - d * s
    else:
        d, c = 0.0, float(np.mean(y))
    dt = float(np.median(np.diff(s)))
    span = s[-1] - s[0]
    res = min(0.02, 0.2 / max(span, dt))
    if f_band is None:
        f, _, _ = fft_peak(s, y, resolution=res, f_min=0.5 / max(span, dt))
    else:
        _, fr, pw = fft_peak(s, y, resolution=res)
        band = (fr >= f_band[0]) & (fr <= f_band[1])
        if not band.any():
            raise FitError(f"frequency band {f_band} outside the resolvable range")
        f = float(fr[band][np.argmax(pw[band])])
    env = np.abs(hilbert(y - c))
    k = slice(len(s) // 10, len(s) - len(s) // 10 or None)
    ok = env[k] > 0
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(s[k][ok], np.log(env[k][ok]), 1)
        G = max(-slope, 0.0)
    else:
        G = 0.0
    w = np.exp(G * s)
    x = (y - c) * w
    a = 2 * np.mean(x * np.cos(2 * pi * f * s))
    b = -2 * np.mean(x * np.sin(2 * pi * f * s))
    A = float(np.hypot(a, b))
    phi = float(np.arctan2(b, a))
    p = [c, A, G, f, phi]
    return np.array(p + [d] if drift else p)


SIGMA_FLOOR = 0.1  # relative to the median stderr


def fit_damped_sinusoid(trace, window=None, guess=None, origin=0.0, max_iter=MAX_ITER,
                        f_band=None, drift=False):
    """Weighted least squares (Levenberg-Marquardt) fit of a damped cosine.

    ``trace`` is a CorrelationEstimate or a (tau, y[, stderr]) tuple. Times are
    measured from ``origin`` inside the fit. Weights are 1/stderr^2 when
    errors are present, otherwise uniform with errors scaled by the residual.
    ``guess`` overrides the automatic initial guess, ``f_band`` narrows its
    frequency search and ``drift`` adds a linear baseline term.
    """
    if isinstance(trace, CorrelationEstimate):
        tau, y, err = trace.tau, trace.g2, trace.stderr
    else:
        tau, y = np.asarray(trace[0], float), np.asarray(trace[1], float)
        err = np.asarray(trace[2], float) if len(trace) > 2 else np.zeros_like(y)
    tau = np.asarray(tau, float)
    lo, hi = (tau[0], tau[-1]) if window is None else window
    sel = (tau >= lo - 1e-12) & (tau <= hi + 1e-12) & np.isfinite(y)
    if sel.sum() < 8:
        raise FitError(f"need at least 8 bins in the fit window, got {int(sel.sum())}")
    s = tau[sel] - origin
    yy = y[sel]
    ee = err[sel]
    pos = ee[np.isfinite(ee) & (ee > 0)]
    absolute = len(pos) >= len(ee) // 2 + 1
    if absolute:
        # bins with (near) zero spread, e.g. tau -> 0 where all trajectories agree,
        # would otherwise pin the fit and collapse the covariance
        ee = np.where(np.isfinite(ee), ee, np.inf)
        ee = np.maximum(ee, SIGMA_FLOOR * np.median(pos))
    wts = 1.0 / ee if absolute else np.ones_like(yy)

    p0 = initial_guess(s, yy, f_band, drift) if guess is None else np.asarray(guess, float)
    if drift and len(p0) == 5:
        p0 = np.r_[p0, 0.0]

    def resid(p):
        return (damped_cosine(s, *p) - yy) * wts

    res = least_squares(resid, p0, jac=lambda p: _jac(p, s, wts), method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iter * 6)
    p = res.x
    converged = res.status > 0 and np.all(np.isfinite(p))
    dof = max(len(s) - len(p), 1)
    chi2 = float(np.sum(res.fun ** 2))
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(J.T @ J)
    if not absolute:
        cov = cov * chi2 / dof
    perr = np.sqrt(np.abs(np.diag(cov)))
    c, A, G, f, phi = canonical(*p[:5])
    errors = dict(zip(PARAMS + ("drift",), map(float, perr)))
    scale = max(np.std(yy), 1e-300)
    identifiable = bool(A > 1e-9 * scale + 1e-12 and (not np.isfinite(errors["amplitude"])
                                                      or A > 2 * errors["amplitude"]))
    if not identifiable:
        errors["freq"] = float("inf")
        errors["phase"] = float("inf")
    if converged and not np.all(np.isfinite(perr)) and identifiable:
        converged = False
    return BeatFit(float(c), float(A), float(G), float(f), float(phi), errors, (float(lo), float(hi)),
                   bool(converged), float(np.sqrt(chi2)), identifiable, float(origin), int(sel.sum()),
                   res.message, float(p[5]) if drift else 0.0)


# post-revival defaults
GUARD = 0.2
SPAN = 3.0


def post_revival_fit(trace, t_on, guard=GUARD, span=SPAN, guess=None, f_band=None, drift=False):
    """Fit [t_on + guard, t_on + span] with time measured from the revival ``t_on``.

    ``amplitude`` is the beat amplitude at the revival; ``phase0`` gives the
    phase back-propagated to tau = 0.
    """
    tau = trace.tau if isinstance(trace, CorrelationEstimate) else np.asarray(trace[0])
    if not (tau[0] <= t_on <= tau[-1]):
        raise FitError(f"revival time {t_on} outside the trace")
    return fit_damped_sinusoid(trace, (t_on + guard, t_on + span), guess=guess, origin=t_on,
                               f_band=f_band, drift=drift)


def jackknife(trace, fit):
    """Refit leave-one-batch-out traces and replace the fit errors by jackknife errors.

    Trajectory noise is correlated across tau, so least-squares errors that treat
    bins as independent understate the spread. Needs ``trace.batches``; when those
    are missing or too few refits succeed, ``fit(trace)`` is returned unchanged.
    """
    full = fit(trace)
    b = getattr(trace, "batches", None)
    if b is None or len(b[1]) < 3:
        return full
    nums, dens = b
    N, D = nums.sum(axis=0), dens.sum()
    vals = []
    for k in range(len(dens)):
        d = D - dens[k]
        if d <= 0:
            continue
        y = (N - nums[k]) / d
        try:
            r = fit(replace(trace, g2=y, batches=None))
        except FitError:
            continue
        if r.converged:
            vals.append((r.offset, r.amplitude, r.decay, r.freq,
                         full.phase + wrap_phase(r.phase - full.phase), r.drift))
    B = len(vals)
    if B < max(3, len(dens) // 2):
        return full
    v = np.array(vals)
    sd = np.sqrt((B - 1) / B * ((v - v.mean(axis=0)) ** 2).sum(axis=0))
    errors = dict(zip(PARAMS + ("drift",), map(float, sd)))
    if not full.freq_identifiable:
        errors["freq"] = errors["phase"] = float("inf")
    return replace(full, errors=errors)


@dataclass
class ScanResult:
    variable: str
    values: np.ndarray
    fits: list
    slope: float = float("nan")
    slope_err: float = float("nan")
    intercept: float = float("nan")
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        if len(self.fits) != len(self.values):
            raise ValueError("one fit per scan point")
        if np.any(np.diff(self.values) <= 0):
            raise ValueError("scan variable must be strictly increasing")


def weighted_linfit(x, y, err, deg=1):
    """Polynomial least squares with 1/err^2 weights; returns (coef high-first, cov)."""
    x, y, err = map(lambda a: np.asarray(a, float), (x, y, err))
    coef, cov = np.polyfit(x, y, deg, w=1.0 / err, cov="unscaled")
    return coef, cov


def unwrap_nearest(phases):
    """Unwrap a sequence by nearest-branch continuity."""
    return np.unwrap(np.asarray(phases, float))


def feedback_scan(epsilons, traces, t_on, guard=GUARD, span=SPAN, reference=None, f_band=None,
                  drift=False, resample=True):
    """Post-revival fits per epsilon, normalized to the epsilon = 1 point (or ``reference``).

    Returns a ScanResult with ``extra`` columns amp_ratio, amp_err,
    phase_shift, phase_err, converged.
    """
    eps = np.asarray(epsilons, float)
    order = np.argsort(eps)
    eps = eps[order]
    traces = [traces[i] for i in order]
    def fit(tr):
        return post_revival_fit(tr, t_on, guard, span, f_band=f_band, drift=drift)

    fits = [jackknife(tr, fit) if resample else fit(tr) for tr in traces]
    ref = int(np.argmin(np.abs(eps - 1.0))) if reference is None else reference
    r = fits[ref]
    amps = np.array([f.amplitude for f in fits])
    aerr = np.array([f.err("amplitude") for f in fits])
    ratio = amps / r.amplitude
    rerr = ratio * np.sqrt((aerr / np.where(amps > 0, amps, np.inf)) ** 2
                           + (r.err("amplitude") / r.amplitude) ** 2)
    rerr[ref] = 0.0
    # phase at the revival time, relative to the reference
    shift = np.array([wrap_phase(f.phase - r.phase) for f in fits])
    shift = unwrap_nearest(shift[::-1])[::-1]   # continuity anchored at the largest epsilon
    shift -= shift[ref]
    perr = np.array([np.hypot(f.err("phase"), r.err("phase")) for f in fits])
    perr[ref] = 0.0
    conv = np.array([f.converged for f in fits])
    return ScanResult("epsilon", eps, fits, extra=dict(amp_ratio=ratio, amp_err=rerr, amplitude=amps,
                                                       amplitude_err=aerr, phase_shift=shift,
                                                       phase_err=perr, converged=conv))


def photon_scan(ns, traces, window=None, f_band=None, resample=True):
    """Fit each trace, regress frequency and decay on n (flagged fits excluded)."""
    ns = np.asarray(ns, float)

    def fit(tr):
        return fit_damped_sinusoid(tr, window, f_band=f_band)

    fits = [jackknife(tr, fit) if resample else fit(tr) for tr in traces]
    ok = np.array([f.converged and f.freq_identifiable for f in fits])
    out = ScanResult("n_photons", ns, fits)
    f = np.array([x.freq for x in fits])
    fe = np.array([x.err("freq") for x in fits])
    G = np.array([x.decay for x in fits])
    Ge = np.array([x.err("decay") for x in fits])
    extra = dict(freq=f, freq_err=fe, decay=G, decay_err=Ge, used=ok)
    if ok.sum() >= 2:
        coef, cov = weighted_linfit(ns[ok], f[ok], fe[ok])
        out.slope, out.intercept = float(coef[0]), float(coef[1])
        out.slope_err = float(np.sqrt(cov[0, 0]))
        gc, gcov = weighted_linfit(ns[ok], G[ok], Ge[ok])
        extra["decay_slope"] = float(gc[0])
        extra["decay_slope_err"] = float(np.sqrt(gcov[0, 0]))
        extra["decay_intercept"] = float(gc[1])
        extra["freq_resid"] = f[ok] - np.polyval(coef, ns[ok])
    if ok.sum() >= 4:
        qc, qcov = weighted_linfit(ns[ok], f[ok], fe[ok], deg=2)
        extra["quad_coef"] = float(qc[0])
        extra["quad_err"] = float(np.sqrt(qcov[0, 0]))
        extra["quadratic_ok"] = bool(abs(qc[0]) < 3 * np.sqrt(qcov[0, 0]))
    out.extra = extra
    return out
