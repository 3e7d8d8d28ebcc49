"""Atomic-beam transits through a Gaussian standing-wave cavity mode.

Geometry: the atom moves on a straight line at speed ``v``, tilted by
``tilt`` from the plane perpendicular to the cavity axis. Its transverse
distance from the axis is rho(t)^2 = rho0^2 + (v cos(tilt) (t - tc))^2 and
its axial position advances as v sin(tilt) (t - tc), which sweeps the
standing-wave phase. Lengths are in um, times in us, speeds in m/s (= um/us).
"""
from dataclasses import dataclass
from math import cos, sin, pi, sqrt, erf

import numpy as np
from scipy.integrate import trapezoid

from .kernels import (SLOT_COLS, SL_ACTIVE, SL_GMAX, SL_TC, SL_V, SL_RHO0, SL_PHASE0,
                      SL_TILT, SL_W, SL_K, SL_HALFWIN, coupling_at)


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamTransit:
    """One atom passage. ``arrival`` is when the atom enters the transit window."""
    arrival: float
    v: float
    rho0: float
    phase0: float
    tilt: float = 0.0

    def __post_init__(self):
        if self.v <= 0:
            raise ValueError("transit speed must be positive")


@dataclass(frozen=True)
class BeamGeometry:
    """Statistics of the beam and the mode it crosses.

    ``window_w`` is the transit window length in units of w/v (6 means the
    atom is tracked for 6w/v, centred on closest approach). ``rho0_max_w``
    bounds the uniform impact-parameter distribution in units of w.
    """
    waist: float = 56.0
    wavelength: float = 0.780241
    v: float = 13.5
    tilt: float = 0.0
    rho0_max_w: float = 2.0
    window_w: float = 6.0

    @property
    def k(self):
        return 2 * pi / self.wavelength

    @property
    def window(self):
        return self.window_w * self.waist / self.v

    @property
    def half_window(self):
        return 0.5 * self.window

    def sample(self, rng, arrival):
        rho0 = rng.uniform(-self.rho0_max_w, self.rho0_max_w) * self.waist
        phase0 = rng.uniform(0.0, 2 * pi)
        return BeamTransit(arrival, self.v, rho0, phase0, self.tilt)


def transit_row(transit, geometry, g_max, active=True):
    """Pack a transit into the kernel slot layout."""
    row = np.zeros(SLOT_COLS)
    row[SL_ACTIVE] = 1.0 if active else 0.0
    row[SL_GMAX] = g_max
    row[SL_TC] = transit.arrival + geometry.half_window
    row[SL_V] = transit.v
    row[SL_RHO0] = transit.rho0
    row[SL_PHASE0] = transit.phase0
    row[SL_TILT] = transit.tilt
    row[SL_W] = geometry.waist
    row[SL_K] = geometry.k
    row[SL_HALFWIN] = geometry.half_window
    return row


def static_row(g):
    """Slot row for an atom held at constant coupling ``g`` (no transit)."""
    row = np.zeros(SLOT_COLS)
    row[SL_ACTIVE] = 1.0
    row[SL_GMAX] = g
    row[SL_V] = 0.0
    row[SL_W] = 1.0
    row[SL_HALFWIN] = np.inf
    return row


def coupling_profile(transit, waist, wavelength, t, g_max=1.0, window_w=6.0):
    """g(t) for one transit; zero outside the transit window."""
    geo = BeamGeometry(waist=waist, wavelength=wavelength, v=transit.v, tilt=transit.tilt,
                       window_w=window_w)
    return float(coupling_at(float(t), transit_row(transit, geo, g_max)))


def mean_coupling_integral(geometry):
    """E[ integral of g(t)^2/g_max^2 over one window ], closed form.

    The axial phase is uniform so cos^2 averages to 1/2; the impact
    parameter is uniform on [-R, R].
    """
    w = geometry.waist
    R = geometry.rho0_max_w * w
    a = sqrt(2.0) / w
    rho_avg = sqrt(pi) / (2 * a) * erf(a * R) / R if R > 0 else 1.0
    b = sqrt(2.0) * geometry.v * cos(geometry.tilt) / w
    H = geometry.half_window
    t_int = sqrt(pi) / b * erf(b * H)
    return 0.5 * rho_avg * t_int


def _mc_integral(geometry, rng, n):
    # Monte-Carlo over geometry with per-transit trapezoid quadrature in time
    H = geometry.half_window
    s = np.linspace(-H, H, 801)
    w = geometry.waist
    rho0 = rng.uniform(-geometry.rho0_max_w, geometry.rho0_max_w, n) * w
    ph = rng.uniform(0.0, 2 * pi, n)
    y = geometry.v * cos(geometry.tilt) * s
    z = geometry.k * geometry.v * sin(geometry.tilt) * s
    out = np.empty(n)
    for a in range(0, n, 8192):       # bounded memory for large samples
        b = min(a + 8192, n)
        env = np.exp(-2.0 * (rho0[a:b, None] ** 2 + y[None, :] ** 2) / w ** 2)
        out[a:b] = trapezoid(env * np.cos(ph[a:b, None] + z[None, :]) ** 2, s, axis=1)
    return out


def calibrate_flux(n_eff, geometry, rng=None, rel_tol=0.005, max_iter=12):
    """Poisson arrival rate (atoms/us) whose time-averaged sum g_i^2/g_max^2 is ``n_eff``.

    The per-atom coupling integral is estimated by Monte Carlo over transit
    geometry, doubling the sample until its relative standard error is below
    ``rel_tol``. Mean coupling = rate * integral (Campbell's theorem), so the
    rate is linear in ``n_eff``.
    """
    if n_eff <= 0:
        raise ValueError("target N_eff must be positive")
    rng = np.random.default_rng(12345) if rng is None else rng
    n = 2000
    vals = np.zeros(0)
    for _ in range(max_iter):
        vals = np.concatenate([vals, _mc_integral(geometry, rng, n)])
        mean = vals.mean()
        se = vals.std(ddof=1) / sqrt(len(vals))
        if mean > 0 and se / mean < rel_tol:
            return n_eff / mean
        n = len(vals)
    raise CalibrationError(f"flux calibration did not converge (rel err {se / mean:.3g})")


def simulate_n_eff(rate, geometry, duration, rng, dt=0.05):
    """Direct time average of sum_i g_i(t)^2/g_max^2 for Poisson arrivals (no slot limit)."""
    H = geometry.half_window
    t_lo = -2 * H
    n_atoms = rng.poisson(rate * (duration - t_lo))
    arrivals = rng.uniform(t_lo, duration, n_atoms)
    ts = np.arange(0.0, duration, dt)
    w = geometry.waist
    total = np.zeros_like(ts)
    for a in arrivals:
        tr = geometry.sample(rng, a)
        tc = a + H
        lo, hi = np.searchsorted(ts, [tc - H, tc + H])
        s = ts[lo:hi] - tc
        rho2 = tr.rho0 ** 2 + (tr.v * cos(tr.tilt) * s) ** 2
        g = np.exp(-rho2 / w ** 2) * np.cos(tr.phase0 + geometry.k * tr.v * sin(tr.tilt) * s)
        total[lo:hi] += g * g
    return float(total.mean())
