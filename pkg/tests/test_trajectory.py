from math import pi, sqrt, exp

import numpy as np
import pytest
from scipy import stats

from qbeat.atoms import FourLevelScheme
from qbeat.beam import BeamGeometry, BeamTransit, coupling_profile, calibrate_flux, simulate_n_eff
from qbeat.ensemble import Experiment, run_ensemble
from qbeat.master import MasterEquation
from qbeat.model import SystemModel, basis_state, product_state, reduced_atom, drive_for_photons
from qbeat.trajectory import (Simulator, TrajectoryState, AtomSource, RecordSpec, EngineOptions,
                              step_nojump, sample_jump, apply_jump, run_trajectory, TrajectoryError)

from conftest import four_level, TWO_PI

SPLIT = TWO_PI * 4.67


def sim_for(model, initial=None, **kw):
    src = AtomSource(initial=initial) if initial is not None else AtomSource()
    return Simulator(model, src, **kw)


def chan_index(sim, label):
    return [c.label for c in sim.ops.channels].index(label)


# -- no-jump evolution ----------------------------------------------------------------

def test_dark_ground_superposition_is_unitary():
    m = four_level(split=SPLIT, nv=1)
    sim = sim_for(m)
    v = np.array([1, 1j, 0, 0]) / sqrt(2)
    st = TrajectoryState(product_state(m, [v]), 0.0)
    c0 = np.vdot(st.psi[m.dims[1] * 0], st.psi[m.dims[1] * 1])
    dt, n = 0.01, 1000
    for _ in range(n):
        st, info = step_nojump(sim, st, dt)
        assert info["norm_violations"] == 0
    assert st.t == pytest.approx(n * dt, abs=1e-9)
    assert st.norm2 == pytest.approx(1.0, abs=1e-12)
    r = reduced_atom(st.psi, m)
    r0 = np.outer(v, v.conj())
    assert abs(r[1, 0]) == pytest.approx(abs(r0[1, 0]), abs=1e-12)
    # E(g+) - E(g-) = SPLIT, so rho[g+, g-] picks up exp(-i SPLIT t)
    dphi = np.angle(r[1, 0] / r0[1, 0])
    want = np.angle(np.exp(-1j * SPLIT * st.t))
    assert abs(np.angle(np.exp(1j * (dphi - want)))) < 1e-10


def test_bare_excited_atom_norm_decays_exponentially():
    gamma = TWO_PI * 6.07
    m = four_level(g=0.0, nv=0, gamma=gamma)
    sim = sim_for(m)
    st = TrajectoryState(basis_state(m, [3]), 0.0)
    for k in range(1, 6):
        st, _ = step_nojump(sim, st, 0.02)
        assert st.norm2 == pytest.approx(exp(-gamma * 0.02 * k), rel=1e-8)


def test_norm_never_increases_in_driven_run():
    m = four_level(split=SPLIT, delta=TWO_PI * 0.6, drive=drive_for_photons(0.3, TWO_PI * 2.0), nv=2)
    res = run_trajectory(m, duration=200.0, seed=4)
    assert res.stats["norm_violations"] == 0
    assert len(res.record) > 0


# -- jump sampling --------------------------------------------------------------------

def test_waiting_times_are_exponential():
    gamma = TWO_PI * 6.0
    m = four_level(g=0.0, nv=0, gamma=gamma)
    sim = sim_for(m)
    rng = np.random.default_rng(1)
    psi0 = basis_state(m, [2])
    n = 100_000
    waits = np.empty(n)
    for i in range(n):
        st = TrajectoryState(psi0.copy(), 0.0)
        t, ch = sample_jump(sim, st, rng, 50.0)
        waits[i] = t
    assert stats.kstest(waits, "expon", args=(0, 1 / gamma)).pvalue > 0.01


def test_channel_selection_follows_rates():
    # one H photon, detector efficiency 2/3: detected vs lost rates are 2:1
    m = SystemModel(FourLevelScheme(), 1.0, TWO_PI * 2.0, 1.0, n_max_v=0, n_max_h=1, n_slots=0,
                    eff_h=2 / 3)
    sim = sim_for(m)
    iH, iL = chan_index(sim, "H"), chan_index(sim, "loss_H")
    rng = np.random.default_rng(2)
    psi0 = np.array([0, 1], complex)
    picks = []
    for _ in range(6000):
        st = TrajectoryState(psi0.copy(), 0.0)
        t, ch = sample_jump(sim, st, rng, 50.0)
        picks.append(ch)
    picks = np.array(picks)
    n = len(picks)
    k = np.sum(picks == iH)
    assert np.sum(picks == iL) == n - k
    sd = sqrt(n * (2 / 3) * (1 / 3))
    assert abs(k - 2 * n / 3) < 3 * sd


def test_zero_rate_gives_no_jump():
    m = four_level(split=SPLIT, nv=1)
    sim = sim_for(m)
    st = TrajectoryState(basis_state(m, [0]), 0.0)
    t, ch = sample_jump(sim, st, np.random.default_rng(0), 20.0)
    assert t is None and ch == -1


# -- jumps ------------------------------------------------------------------------------

def test_emission_from_excited_atom_lands_in_ground_state():
    m = four_level(g=0.0, nv=0)
    sim = sim_for(m)
    st = TrajectoryState(basis_state(m, [3]), 0.0)
    st = apply_jump(sim, st, chan_index(sim, "side+0_0"))
    assert np.array_equal(st.psi, basis_state(m, [1]))
    assert st.norm2 == 1.0


def test_detector_v_annihilates_a_photon():
    m = four_level(g=0.0, nv=2, nh=0, frame="lab")
    sim = sim_for(m)
    st = TrajectoryState(basis_state(m, [0], n_v=2), 0.0)
    st = apply_jump(sim, st, chan_index(sim, "V"))
    assert np.allclose(st.psi, basis_state(m, [0], n_v=1), atol=1e-15)
    assert st.norm2 == pytest.approx(1.0, abs=1e-12)


def test_jump_into_null_space_is_an_error():
    m = four_level(g=0.0, nv=0)
    sim = sim_for(m)
    st = TrajectoryState(basis_state(m, [0]), 0.0)
    with pytest.raises(TrajectoryError):
        apply_jump(sim, st, chan_index(sim, "side+0_0"))


def test_spin_localization_is_bimodal_with_initial_weights():
    # B = 0, leg g+ scatters 4x faster than g-; populations 0.3 / 0.7
    sch = FourLevelScheme(ground_split=0.0, delta=0.0, leg_weights=(0.5, 1.0))
    kappa = TWO_PI * 2.0
    m = SystemModel(sch, TWO_PI * 1.5, kappa, TWO_PI * 6.0, drive=drive_for_photons(0.3, kappa),
                    n_max_v=1, n_max_h=0, eff_v=1.0)
    p_plus = 0.3
    v = np.array([sqrt(1 - p_plus), sqrt(p_plus), 0, 0])
    T = 25.0
    exp_ = Experiment(m, AtomSource(initial=tuple(v)), None, EngineOptions(),
                      RecordSpec(norm_dt=0.0, snapshots=(T,), snapshot_kind="atom"), T + 1e-9)
    n = 300
    res = run_ensemble(exp_, n, seed=11)
    finals = np.array([s[0][1, 1].real / (s[0][0, 0] + s[0][1, 1]).real for s in res.snapshots])
    assert np.mean((finals < 0.05) | (finals > 0.95)) > 0.9
    frac = np.mean(finals > 0.5)
    assert abs(frac - p_plus) < 3 * sqrt(p_plus * (1 - p_plus) / n)


# -- whole trajectories ---------------------------------------------------------------------

def test_undriven_ground_atoms_never_click():
    m = four_level(split=SPLIT, nv=1, nh=1)
    res = run_trajectory(m, duration=100.0, seed=1)
    assert len(res.record) == 0


def test_same_seed_same_record():
    m = four_level(split=SPLIT, delta=TWO_PI * 0.6, drive=drive_for_photons(0.3, TWO_PI * 2.0), nv=2)
    a = run_trajectory(m, duration=100.0, seed=9)
    b = run_trajectory(m, duration=100.0, seed=9)
    assert len(a.record) > 0
    assert list(a.record.to_csv_rows()) == list(b.record.to_csv_rows())
    c = run_trajectory(m, duration=100.0, seed=10)
    assert list(a.record.to_csv_rows()) != list(c.record.to_csv_rows())


@pytest.mark.parametrize("frame", ["displaced", "lab"])
def test_empty_driven_cavity_click_rate(frame):
    kappa, n_ph, eff = TWO_PI * 2.0, 0.2, 0.8
    m = SystemModel(FourLevelScheme(), 0.0, kappa, 1.0, drive=drive_for_photons(n_ph, kappa),
                    n_max_v=6 if frame == "lab" else 0, n_max_h=0, n_slots=0, eff_v=eff, frame=frame)
    T = 400.0
    res = run_trajectory(m, duration=T, seed=3)
    n = len(res.record.select("V"))
    mean = 2 * kappa * n_ph * eff * T
    assert abs(n - mean) < 3 * sqrt(mean)


def test_unraveling_matches_oracle_within_three_sigma():
    m = four_level(split=TWO_PI * 2.0, delta=TWO_PI * 0.6, drive=drive_for_photons(0.2, TWO_PI * 2.0),
                   nv=1, eff_v=0.0)
    v = np.array([1, 1, 0, 0]) / sqrt(2)
    ts = (0.5, 1.0, 1.5)
    exp_ = Experiment(m, AtomSource(initial=tuple(v)), None, EngineOptions(rtol=1e-8, atol=1e-10),
                      RecordSpec(norm_dt=0.0, snapshots=ts, snapshot_kind="atom"), ts[-1] + 1e-9)
    n = 1500
    res = run_ensemble(exp_, n, seed=5)
    snaps = np.array(res.snapshots)               # (n, len(ts), 4, 4)
    psi = product_state(m, [v])
    oracle = MasterEquation(m).evolve(np.outer(psi, psi.conj()), np.r_[0.0, ts])[1:]
    for k, r in enumerate(oracle):
        ra = reduced_atom(r, m)
        for (i, j) in ((0, 0), (1, 1), (2, 2), (1, 0)):
            for part in (np.real, np.imag):
                x = part(snaps[:, k, i, j])
                se = x.std(ddof=1) / sqrt(n)
                assert abs(x.mean() - part(ra[i, j])) <= 3 * se + 1e-3


# -- beam ------------------------------------------------------------------------------------

W, LAM = 56.0, 0.780241


def test_coupling_profile_maximum_node_and_waist():
    v = 13.5
    tr = BeamTransit(arrival=0.0, v=v, rho0=0.0, phase0=0.0)
    t_c = 0.5 * 6 * W / v
    assert coupling_profile(tr, W, LAM, t_c, g_max=2.0) == pytest.approx(2.0, rel=1e-14)
    node = BeamTransit(arrival=0.0, v=v, rho0=0.0, phase0=pi / 2)
    for t in np.linspace(0, 6 * W / v, 13):
        assert abs(coupling_profile(node, W, LAM, t)) < 1e-15
    off = BeamTransit(arrival=0.0, v=v, rho0=W, phase0=0.0)
    assert coupling_profile(off, W, LAM, t_c, g_max=2.0) == pytest.approx(2.0 / np.e, rel=1e-14)
    assert coupling_profile(tr, W, LAM, -1.0) == 0.0


def test_flux_calibration_limits_and_linearity():
    geo = BeamGeometry(waist=W, wavelength=LAM, v=13.5, tilt=0.017)
    r1 = calibrate_flux(0.55, geo, np.random.default_rng(7))
    r2 = calibrate_flux(1.10, geo, np.random.default_rng(7))
    assert r2 == pytest.approx(2 * r1, rel=1e-12)
    assert calibrate_flux(1e-9, geo, np.random.default_rng(7)) < 1e-8
    with pytest.raises(ValueError):
        calibrate_flux(0.0, geo)


def test_flux_calibration_matches_direct_time_average():
    geo = BeamGeometry(waist=W, wavelength=LAM, v=13.5, tilt=0.017)
    rate = calibrate_flux(0.55, geo, np.random.default_rng(8), rel_tol=0.002)
    n_eff = simulate_n_eff(rate, geo, 3.0e5, np.random.default_rng(9), dt=0.05)
    assert n_eff == pytest.approx(0.55, rel=0.02)
