"""Runs behind the CLI subcommands, usable directly from Python."""
from dataclasses import dataclass, field
from math import pi

import numpy as np

from . import theory
from .analysis import feedback_scan, photon_scan, ScanResult
from .atoms import FourLevelScheme
from .config import (build_model, build_geometry, build_feedback, arrival_rate, rad_per_us,
                     resolve_seed_workers)
from .correlator import (g2_from_clicks, g2_direct_ensemble, CorrelationEstimate, _batch_stderr, batch_sums)
from .detector import detect
from .ensemble import Experiment, run_ensemble
from .master import MasterEquation, trace_distance
from .model import product_state, is_four_level
from .trajectory import AtomSource, RecordSpec, EngineOptions


def tau_grid(cfg):
    w = cfg["analysis.bin_width_us"]
    n = int(round(cfg["analysis.max_tau_us"] / w))
    return (np.arange(n) + 0.5) * w


def larmor(cfg):
    """Larmor angular frequency of the ground manifold (rad/us)."""
    s = cfg.get("system")
    from .atoms import zeeman_shift
    return abs(zeeman_shift(s["ground_gf"], 1, s["b_gauss"]))


def beat_band(cfg, model=None):
    """Frequency window (MHz) searched for the beat: around 1x Larmor for homodyne, 2x otherwise."""
    m = model if model is not None else build_model(cfg)
    f0 = larmor(cfg) / (2 * pi) * (1 if m.theta_h % 90 != 0 else 2)
    return (0.5 * f0, 1.5 * f0)


def build_experiment(cfg, feedback=None, model=None, record=None):
    m = model if model is not None else build_model(cfg)
    b = cfg.get("beam")
    if b["enabled"]:
        src = AtomSource(build_geometry(cfg), arrival_rate(cfg), queue_max=b["queue_max"],
                         initial=b["initial"])
    else:
        src = AtomSource(initial=b["initial"])
    e = cfg.get("ensemble")
    fb = build_feedback(cfg) if feedback is None else feedback
    opts = EngineOptions(rtol=e["rtol"], atol=e["atol"], warmup=e["warmup_us"])
    if record is None:
        if cfg["analysis.estimator"] == "direct":
            record = RecordSpec(taus=tuple(tau_grid(cfg)), herald=cfg["detection.herald"],
                                target=cfg["detection.target"], norm_dt=cfg["analysis.bin_width_us"])
        else:
            record = RecordSpec(norm_dt=0.0)
    return Experiment(m, src, fb, opts, record, e["duration_us"])


def correlation(cfg, exp, result, seed):
    """g2 estimate from an ensemble according to ``analysis.estimator``."""
    if cfg["analysis.estimator"] == "direct":
        return g2_direct_ensemble(result)
    d = cfg.get("detection")
    rec = detect(result.record, d["dark_rate_per_us"], d["dead_time_us"], seed)
    fb = exp.feedback
    dead = fb.latency + fb.t_fb if fb.enabled else 0.0
    return g2_from_clicks(rec, cfg["analysis.bin_width_us"], cfg["analysis.max_tau_us"],
                          d["herald"], d["target"], arm_dead=dead)


@dataclass
class BeatRun:
    estimate: CorrelationEstimate
    result: object
    epsilon: float
    feedback: bool
    t_on: float


def run_beat(cfg, seed=None, workers=None, epsilon=None, enabled=None, progress=None):
    seed, workers = resolve_seed_workers(cfg, seed, workers)
    over = {}
    if epsilon is not None:
        over["epsilon"] = epsilon
    if enabled is not None:
        over["enabled"] = enabled
    fb = build_feedback(cfg, **over)
    exp = build_experiment(cfg, feedback=fb)
    res = run_ensemble(exp, cfg["ensemble.trajectories"], seed, workers, progress)
    est = correlation(cfg, exp, res, seed)
    return BeatRun(est, res, fb.epsilon if fb.enabled else 1.0, fb.enabled, fb.latency + fb.t_fb)


def scan_feedback_intensity(cfg, epsilons=None, t_fb=None, seed=None, workers=None, progress=None):
    """Ensemble per epsilon, post-revival fit, amplitude and phase relative to epsilon = 1."""
    eps = sorted(cfg["analysis.epsilons"] if epsilons is None else epsilons)
    if t_fb is not None:
        cfg = cfg.with_(feedback__t_fb_us=float(t_fb))
    cfg = cfg.with_(feedback__enabled=True)
    runs = [run_beat(cfg, seed, workers, epsilon=e, progress=progress) for e in eps]
    t_on = cfg["feedback.latency_us"] + cfg["feedback.t_fb_us"]
    scan = feedback_scan(eps, [r.estimate for r in runs], t_on, cfg["analysis.guard_us"],
                         cfg["analysis.span_us"], f_band=beat_band(cfg), drift=True)
    return scan, runs


# -- four-level coherence traces -----------------------------------------

def four_level_model(cfg, n_photons):
    return build_model(cfg, n_photons=n_photons)


def coherence_trace(model, taus, n_traj, seed, workers=None, rtol=1e-7, atol=1e-9):
    """Beat signal 1 + 2 Re rho(g+, g-) from an ensemble started in (g- + g+)/sqrt(2).

    Returns a CorrelationEstimate whose errors come from trajectory batches; the
    batch sums are attached so fits can be jackknifed.
    """
    sch = model.scheme
    lo, hi = sch.ground_pair()
    v = np.zeros(sch.n_levels, complex)
    v[lo] = v[hi] = 1 / np.sqrt(2)
    src = AtomSource(initial=tuple(v))
    rec = RecordSpec(norm_dt=0.0, snapshots=tuple(taus), snapshot_kind="atom")
    exp = Experiment(model, src, None, EngineOptions(rtol=rtol, atol=atol), rec, float(taus[-1]) + 1e-9)
    res = run_ensemble(exp, n_traj, seed, workers)
    snaps = np.array(res.snapshots)           # (n_traj, n_tau, d, d)
    y = 1 + 2 * snaps[:, :, hi, lo].real
    err = _batch_stderr(y, np.ones(len(y)))
    return CorrelationEstimate(np.asarray(taus, float), y.mean(axis=0), err, n_traj, "ok", "coherence",
                               batches=batch_sums(y, np.ones(len(y))))


def coherence_exact(model, taus):
    me = MasterEquation(model)
    sch = model.scheme
    lo, hi = sch.ground_pair()
    v = np.zeros(sch.n_levels, complex)
    v[lo] = v[hi] = 1 / np.sqrt(2)
    psi = product_state(model, [v])
    r = me.evolve(np.outer(psi, psi.conj()), np.r_[0.0, taus])[1:]
    from .model import reduced_atom
    c = np.array([reduced_atom(x, model)[hi, lo] for x in r])
    return CorrelationEstimate(np.asarray(taus, float), 1 + 2 * c.real, np.zeros(len(taus)), 1, "ok",
                               "exact")


def photon_theory(cfg, n=1.0):
    """Eq. (1)-(2) style prediction for the configured four-level legs.

    The leg with the larger energy gap sits at atom - drive detuning +leg_delta;
    in the drive - atom convention of the closed forms that is Delta = -leg_delta.
    """
    s = cfg.get("system")
    delta = -rad_per_us(s["leg_delta_mhz"])
    return theory.predict(rad_per_us(s["g_mhz"]), n, delta, rad_per_us(s["gamma_mhz"]), larmor(cfg))


def scan_photon_number(cfg, ns=None, seed=None, workers=None, n_traj=None, exact=False):
    """Beat frequency and decay vs drive photon number, with linear regression."""
    seed, workers = resolve_seed_workers(cfg, seed, workers)
    ns = sorted(cfg["analysis.photons"] if ns is None else ns)
    n_traj = cfg["ensemble.trajectories"] if n_traj is None else n_traj
    taus = tau_grid(cfg)
    traces = []
    for n in ns:
        m = four_level_model(cfg, n)
        if is_four_level(m):
            tr = coherence_exact(m, taus) if exact else coherence_trace(m, taus, n_traj, seed, workers)
        else:
            cfg_n = cfg.with_(system__n_photons=float(n), feedback__enabled=False)
            tr = run_beat(cfg_n, seed, workers).estimate
        traces.append(tr)
    m0 = four_level_model(cfg, ns[0])
    band = (0.5 * m0.scheme.ground_split / (2 * pi), 1.5 * m0.scheme.ground_split / (2 * pi)) \
        if is_four_level(m0) else beat_band(cfg, m0)
    scan = photon_scan(ns, traces, f_band=band)
    return scan, traces


# -- oracle validation ---------------------------------------------------

@dataclass
class ValidationReport:
    times: np.ndarray
    distances: np.ndarray
    trace_err: float
    herm_err: float
    norm_violations: int
    tolerance: float = 0.02
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return (bool(np.all(self.distances < self.tolerance)) and self.trace_err < 1e-8
                and self.herm_err < 1e-10 and self.norm_violations == 0)


def validation_model(cfg):
    """Four-level atom and the driven mode at constant coupling (H mode dropped, V cutoff <= 3)."""
    m = build_model(cfg)
    if not is_four_level(m):
        s = cfg.get("system")
        from .atoms import zeeman_shift
        split = 2 * zeeman_shift(s["ground_gf"], 1, s["b_gauss"])
        m = m.with_(scheme=FourLevelScheme(ground_split=split, delta=rad_per_us(s["leg_delta_mhz"])))
    return m.with_(n_max_v=min(max(m.n_max_v, 1), 3), n_max_h=0, n_slots=1)


def validate(cfg, n_traj=None, seed=None, workers=None, n_check=10):
    seed, workers = resolve_seed_workers(cfg, seed, workers)
    n_traj = cfg["analysis.validate_trajectories"] if n_traj is None else n_traj
    m = validation_model(cfg)
    tmax = cfg["analysis.validate_tmax_us"]
    checks = np.linspace(tmax / n_check, tmax, n_check)
    sch = m.scheme
    lo, hi = sch.ground_pair()
    v = np.zeros(sch.n_levels, complex)
    v[lo] = v[hi] = 1 / np.sqrt(2)
    src = AtomSource(initial=tuple(v))
    rec = RecordSpec(norm_dt=0.0, snapshots=tuple(checks), snapshot_kind="atom")
    exp = Experiment(m, src, None, EngineOptions(rtol=1e-7, atol=1e-9), rec, tmax + 1e-9)
    res = run_ensemble(exp, n_traj, seed, workers)
    ens = np.array(res.snapshots).mean(axis=0)
    me = MasterEquation(m)
    psi = product_state(m, [v])
    rhos = me.evolve(np.outer(psi, psi.conj()), np.r_[0.0, checks])[1:]
    from .model import reduced_atom
    dist = np.array([trace_distance(reduced_atom(r, m), e) for r, e in zip(rhos, ens)])
    tr_err = float(max(abs(np.trace(r) - 1) for r in rhos))
    herm = float(max(np.abs(r - r.conj().T).max() for r in rhos))
    return ValidationReport(checks, dist, tr_err, herm, res.stats.get("norm_violations", 0),
                            extra=dict(dim=m.dim, trajectories=n_traj, jumps=res.stats.get("jumps", 0)))


def theory_rows(cfg):
    s = cfg.get("system")
    g = rad_per_us(s["g_mhz"])
    gam = rad_per_us(s["gamma_mhz"])
    n = s["n_photons"]
    grid = [(g, n, rad_per_us(d), gam) for d in cfg["analysis.deltas_mhz"]]
    return theory.theory_table(grid)
