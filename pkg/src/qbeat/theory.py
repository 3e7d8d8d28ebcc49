"""Closed-form four-level predictions for the jump-induced beat shift and damping.

All rates in rad/us. ``n`` is the intracavity drive photon number |alpha|^2.
"""
from dataclasses import dataclass
from math import pi

import numpy as np


class ResolvednessUndefined(ValueError):
    """The ratio Gamma_decoh / (2 Delta_jump) is 0/0 at zero detuning."""


def _lorentz(delta, gamma):
    return (gamma / 2) ** 2 + delta ** 2


def delta_jump(g, n, delta, gamma):
    """Phase drift rate from Rayleigh jumps: 2 g^2 n Delta [(gamma/2) / ((gamma/2)^2 + Delta^2)]^2."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 2 * g ** 2 * n * delta * ((gamma / 2) / _lorentz(delta, gamma)) ** 2


def gamma_decoh(g, n, delta, gamma):
    """Added damping of the ground coherence: 2 g^2 n gamma [Delta / ((gamma/2)^2 + Delta^2)]^2."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return 2 * g ** 2 * n * gamma * (delta / _lorentz(delta, gamma)) ** 2


def ac_stark(g, n, delta, gamma):
    """Usual light shift g^2 n Delta / ((gamma/2)^2 + Delta^2) of the driven ground level."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return g ** 2 * n * delta / _lorentz(delta, gamma)


# ratio above which a single jump already scrambles the beat phase
WASHOUT_RATIO = 1.0


@dataclass(frozen=True)
class Resolvedness:
    ratio: float
    washout: bool


def resolvedness(g, n, delta, gamma):
    """Gamma_decoh / (2 Delta_jump), which reduces to 2 Delta / gamma."""
    if delta == 0:
        raise ResolvednessUndefined("resolvedness is undefined at zero detuning")
    dj = delta_jump(g, n, delta, gamma)
    # with no drive or no coupling both rates vanish; keep the limiting value
    r = gamma_decoh(g, n, delta, gamma) / (2 * dj) if dj != 0 else 2 * delta / gamma
    return Resolvedness(r, abs(r) >= WASHOUT_RATIO)


@dataclass(frozen=True)
class BeatPrediction:
    delta_jump: float
    gamma_decoh: float
    ac_stark: float
    larmor: float
    homodyne: bool = False
    resolvedness: float = float("nan")
    # +1: the jump term lowers the beat angular frequency (omega_base - 2 Delta_jump)
    shift_sign: float = 1.0

    @property
    def base(self):
        """Bare beat angular frequency: 2x Larmor for intensity detection, 1x for homodyne."""
        return self.larmor if self.homodyne else 2 * self.larmor

    @property
    def omega(self):
        return self.base - self.shift_sign * 2 * self.delta_jump

    @property
    def frequency_mhz(self):
        return self.omega / (2 * pi)


def predict(g, n, delta, gamma, larmor, homodyne=False, shift_sign=1.0):
    dj = delta_jump(g, n, delta, gamma)
    gd = gamma_decoh(g, n, delta, gamma)
    r = resolvedness(g, n, delta, gamma).ratio if delta != 0 else float("nan")
    return BeatPrediction(dj, gd, ac_stark(g, n, delta, gamma), larmor, homodyne, r, shift_sign)


def predicted_beat(pred, gamma0, amp0, phi0, tau, windows=(), epsilon=0.0):
    """y(tau) = 1 + A0 exp(-(G0 + Gd) tau) cos((w_base - 2 Dj) tau + phi0).

    ``windows`` lists (t1, t2) intervals where the drive power is reduced to
    ``epsilon``; both jump terms are linear in photon number so inside a
    window they are scaled by ``epsilon``.
    """
    tau = np.asarray(tau, float)
    if np.any(np.diff(tau) < 0):
        raise ValueError("tau grid must be ascending")
    # time spent in windows up to each tau
    dark = np.zeros_like(tau)
    for t1, t2 in windows:
        dark += np.clip(tau, t1, t2) - t1
    lit = tau - dark
    eff = lit + epsilon * dark
    damp = gamma0 * tau + pred.gamma_decoh * eff
    phase = pred.base * tau - pred.shift_sign * 2 * pred.delta_jump * eff + phi0
    return 1.0 + amp0 * np.exp(-damp) * np.cos(phase)


def theory_table(grid):
    """Rows (g, n, delta, gamma, delta_jump, gamma_decoh, ratio, two_delta_over_gamma, ac_stark)."""
    rows = []
    for g, n, delta, gamma in grid:
        dj = delta_jump(g, n, delta, gamma)
        gd = gamma_decoh(g, n, delta, gamma)
        ratio = resolvedness(g, n, delta, gamma).ratio
        rows.append((g, n, delta, gamma, dj, gd, ratio, 2 * delta / gamma, ac_stark(g, n, delta, gamma)))
    return rows
