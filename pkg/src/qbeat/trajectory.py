"""Monte-Carlo wave-function trajectories with beam transits and feedback.

Between jumps the unnormalized state follows H_eff (see :mod:`qbeat.kernels`);
a jump happens when the squared norm falls to a uniform random threshold
and its channel is drawn with probability proportional to ||L psi||^2.

Events that are not jumps (atom arrival/exit, drive edges, snapshots) keep
the squared norm unchanged so the waiting-time bookkeeping stays exact.
An exiting atom is measured in its level basis (unobserved, so this is just
a particular unravelling of the partial trace) and its slot is reset to the
placeholder ground level; an arriving atom replaces the placeholder with the
configured initial state.
"""
from dataclasses import dataclass, field
from math import sqrt, inf
from collections import deque

import numpy as np

from . import kernels as K
from .beam import BeamGeometry, transit_row, static_row
from .feedback import FeedbackConfig, DriveSchedule, on_herald
from .model import build_operators, product_state, reduced_atom, homodyne_mixing

CHANNELS = ("H", "V")


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class AtomSource:
    """Where atoms come from.

    Static mode (``geometry is None``): every slot holds one atom at constant
    coupling ``static_g[i]`` (defaults to the model's g_max) for the whole run.
    Beam mode: Poisson arrivals at ``rate`` per us through ``geometry``;
    arrivals that find every slot busy wait in a FIFO of length ``queue_max``
    and are dropped beyond it.

    ``initial`` is "m0" (ground m=0, or the lower ground level when there is
    no m=0), "mixture" (uniform random ground sublevel) or an explicit vector
    over the atom levels.
    """
    geometry: BeamGeometry = None
    rate: float = 0.0
    static_g: tuple = None
    queue_max: int = 16
    initial: object = "m0"

    @property
    def is_beam(self):
        return self.geometry is not None


@dataclass(frozen=True)
class RecordSpec:
    """What to measure along a trajectory besides clicks.

    ``taus``: delays at which the target-port intensity is recorded after each
    armed herald (conditional records). ``norm_dt``: lattice spacing for the
    unconditional intensity used as normalization. ``snapshots``: absolute
    times at which the reduced state of slot 0 (``snapshot_kind="atom"``) or
    the full normalized state (``"state"``) is stored.
    """
    taus: tuple = ()
    herald: str = "H"
    target: str = "H"
    norm_dt: float = 0.05
    snapshots: tuple = ()
    snapshot_kind: str = "atom"


@dataclass(frozen=True)
class EngineOptions:
    rtol: float = 1e-6
    atol: float = 1e-8
    h_max: float = None
    warmup: float = 0.0
    alpha0: complex = None


@dataclass
class ClickRecord:
    """Time-ordered detector events; channel codes index :data:`CHANNELS`.

    ``spans`` holds (trajectory_id, start, end) of each contributing run and
    ``dark_windows`` the (trajectory_id, start, end) feedback windows during
    which the drive was deliberately reduced.
    """
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    channels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))
    trajectory_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    spans: list = field(default_factory=list)
    dark_windows: list = field(default_factory=list)

    def __len__(self):
        return len(self.times)

    @staticmethod
    def merge(records):
        recs = list(records)
        if not recs:
            return ClickRecord()
        return ClickRecord(
            np.concatenate([r.times for r in recs]),
            np.concatenate([r.channels for r in recs]).astype(np.int8),
            np.concatenate([r.trajectory_ids for r in recs]).astype(np.int64),
            [s for r in recs for s in r.spans],
            [w for r in recs for w in r.dark_windows],
        )

    def select(self, channel, trajectory_id=None):
        code = CHANNELS.index(channel)
        mask = self.channels == code
        if trajectory_id is not None:
            mask &= self.trajectory_ids == trajectory_id
        return self.times[mask]

    def to_csv_rows(self):
        for t, c, i in zip(self.times, self.channels, self.trajectory_ids):
            yield f"{t:.4f},{CHANNELS[c]},{i}"


@dataclass
class TrajectoryResult:
    record: ClickRecord
    n_tau: int = 0
    rec_sum: np.ndarray = None
    rec_sumsq: np.ndarray = None
    n_records: int = 0
    norm_sum: float = 0.0
    norm_n: int = 0
    coupling_sum: float = 0.0
    coupling_n: int = 0
    snapshots: np.ndarray = None
    stats: dict = field(default_factory=dict)


@dataclass
class TrajectoryState:
    psi: np.ndarray
    t: float

    @property
    def norm2(self):
        return float(np.vdot(self.psi, self.psi).real)


def coherent_vector(alpha, n):
    """Coherent state truncated to ``n`` Fock levels and renormalized."""
    amp = np.zeros(n, complex)
    amp[0] = 1.0
    for k in range(1, n):
        amp[k] = amp[k - 1] * alpha / sqrt(k)
    return amp / np.linalg.norm(amp)


def _csr_arrays(m):
    m = m.tocsr()
    return m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.complex128)


def default_h_max(model):
    """Step cap 0.2/r with r the largest rate left in the Runge-Kutta stages.

    Cavity and atomic decay and all Zeeman/detuning terms are diagonal and
    integrated exactly, so only the couplings and the drive set the scale.
    """
    a = abs(model.drive) / abs(model.kappa + 1j * model.delta_c)
    if model.frame == "displaced":
        U = homodyne_mixing(model.theta_h)
        effs = (model.eff_h, model.eff_v)
        s = max(abs(sum(effs[k] * U[k, 1] * U[k, j] for k in range(2))) for j in range(2))
        r = max(model.g_max * max(1.0, a), 2 * model.kappa * s * a)
    else:
        r = max(model.g_max, abs(model.drive))
    return 0.1 if r == 0 else min(0.1, 0.2 / r)


class Simulator:
    """Prepared operators and buffers for one model/source/feedback triple."""

    def __init__(self, model, source=None, feedback=None, options=None, record=None):
        self.model = model
        self.source = source if source is not None else AtomSource()
        self.feedback = feedback if feedback is not None else FeedbackConfig()
        self.options = options if options is not None else EngineOptions()
        self.record = record if record is not None else RecordSpec()
        self.ops = build_operators(model)
        ops = self.ops
        self.gen = -1j * ops.d0
        self.n = ops.dim
        self.h_max = self.options.h_max or default_h_max(model)
        self.chan = []
        for c in ops.channels:
            code = CHANNELS.index(c.label) if c.label in CHANNELS else -1
            self.chan.append((c.op.tocsr(), complex(c.beta), code))
        port_ops = {}
        effs = {"H": model.eff_h, "V": model.eff_v}
        for name, (c_k, u) in ops.ports.items():
            port_ops[name] = (_csr_arrays(c_k), complex(u), 2.0 * model.kappa * effs[name])
        self.port_ops = port_ops
        self.herald_code = CHANNELS.index(self.record.herald)
        self.target = port_ops[self.record.target]
        self.taus = np.asarray(self.record.taus, float)
        self.snap_times = np.sort(np.asarray(self.record.snapshots, float))
        self._Ec = np.empty((5, self.n), complex)
        self._Ei = np.empty((5, self.n), complex)
        self._coef = np.zeros(ops.n_terms, complex)
        self._atom_init = self._initial_vector()
        self._displaced = model.frame == "displaced"

    # -- setup helpers -------------------------------------------------
    def _initial_vector(self):
        sch = self.model.scheme
        d = sch.n_levels
        init = self.source.initial
        if isinstance(init, str):
            if init == "m0":
                v = np.zeros(d, complex)
                v[self._placeholder()] = 1.0
                return v
            if init == "mixture":
                return None
            raise ValueError(f"unknown atom initial state {init!r}")
        v = np.asarray(init, complex)
        if v.shape != (d,):
            raise ValueError("explicit initial atom state has wrong length")
        return v / np.linalg.norm(v)

    def _placeholder(self):
        sch = self.model.scheme
        try:
            return sch.index("g", 0)
        except ValueError:
            return 0

    def _draw_atom(self, rng):
        if self._atom_init is not None:
            return self._atom_init
        sch = self.model.scheme
        v = np.zeros(sch.n_levels, complex)
        v[rng.integers(sch.n_ground)] = 1.0
        return v

    def alpha_ss(self, drive=None):
        m = self.model
        E = m.drive if drive is None else drive
        return E / (m.kappa + 1j * m.delta_c)

    def initial_state(self, rng):
        m = self.model
        K_ = m.n_slots
        atoms = []
        for i in range(K_):
            if self.source.is_beam:
                v = np.zeros(m.scheme.n_levels, complex)
                v[self._placeholder()] = 1.0
            else:
                v = self._draw_atom(rng)
            atoms.append(v)
        v_state = None
        if not self._displaced:
            a = self.options.alpha0 if self.options.alpha0 is not None else self.alpha_ss()
            v_state = coherent_vector(a, m.n_max_v + 1)
        if K_ == 0:
            dims = m.dims
            psi = np.zeros(m.dim, complex)
            if v_state is None:
                psi[0] = 1.0
            else:
                psi = np.kron(v_state, np.eye(dims[-1])[0]).astype(complex)
            return psi
        return product_state(m, atoms, v_state=v_state)

    def _slots_init(self):
        m = self.model
        slots = np.zeros((m.n_slots, K.SLOT_COLS))
        if not self.source.is_beam:
            gs = self.source.static_g
            for i in range(m.n_slots):
                g = m.g_max if gs is None else gs[i]
                slots[i] = static_row(g)
        return slots

    # -- state surgery on one slot -------------------------------------
    def _slot_view(self, psi, i):
        dims = self.model.dims
        pre = int(np.prod(dims[:i])) if i > 0 else 1
        return psi.reshape(pre, dims[i], -1)

    def _exit_slot(self, psi, i, rng):
        v = self._slot_view(psi, i)
        pops = np.einsum("akb,akb->k", v.conj(), v).real
        tot = pops.sum()
        k = rng.choice(len(pops), p=pops / tot)
        phi = v[:, k, :] * sqrt(tot / pops[k])
        out = np.zeros_like(v)
        out[:, self._placeholder(), :] = phi
        return out.reshape(-1)

    def _enter_slot(self, psi, i, atom):
        v = self._slot_view(psi, i)
        phi = v[:, self._placeholder(), :]
        out = atom[None, :, None] * phi[:, None, :]
        return out.reshape(-1)

    # -- jumps -----------------------------------------------------------
    def jump_rates(self, psi, alpha):
        rates = np.empty(len(self.chan))
        outs = []
        for j, (op, beta, _) in enumerate(self.chan):
            v = op @ psi
            if beta != 0.0:
                v = v + (beta * alpha) * psi
            outs.append(v)
            rates[j] = np.vdot(v, v).real
        return rates, outs

    def seg_for(self, t, alpha0, drive):
        return self.ops.seg(t, alpha0, drive)

    # -- main loop -------------------------------------------------------
    def run(self, duration, rng, trajectory_id=0):
        if duration <= 0:
            raise ValueError("duration must be positive")
        m = self.model
        opt = self.options
        rec = self.record
        fb = self.feedback
        src = self.source
        t = -float(opt.warmup)
        t_end = float(duration)
        psi = self.initial_state(rng)
        psi = psi / np.linalg.norm(psi)
        slots = self._slots_init()
        geo = src.geometry
        queue = deque()
        a0 = opt.alpha0 if opt.alpha0 is not None else self.alpha_ss()
        sched = DriveSchedule(fb)
        mult = 1.0
        seg = self.seg_for(t, complex(a0), m.drive)
        thr = rng.random()
        h = self.h_max / 10
        cache_h = np.array([-1.0])

        next_arrival = t + rng.exponential(1.0 / src.rate) if (src.is_beam and src.rate > 0) else inf
        n_tau = len(self.taus)
        tau_max = self.taus[-1] if n_tau else 0.0
        rec_sum = np.zeros(n_tau)
        rec_sumsq = np.zeros(n_tau)
        # pending observations: time, record id (-1 = normalization lattice)
        lattice = np.arange(0.0, t_end, rec.norm_dt) if rec.norm_dt > 0 else np.zeros(0)
        pend_t = lattice.copy()
        pend_id = np.full(len(lattice), -1, np.int64)
        pend_j = np.zeros(len(lattice), np.int64)
        open_recs = {}
        next_rec = 0
        n_records = 0
        norm_sum = 0.0
        norm_n = 0
        coup_sum = 0.0
        coup_n = 0
        arm_until = -inf
        dark = []
        snaps = []
        snap_i = 0
        click_t, click_c = [], []
        (oip, oc, ov), ou, ow = self.target
        stats = dict(steps=0, jumps=0, norm_violations=0, heralds=0, armed=0, arrivals=0,
                     dropped=0, queued=0)
        gmax = m.g_max if m.g_max > 0 else 1.0

        while t < t_end:
            exits = [slots[i, K.SL_TC] + slots[i, K.SL_HALFWIN] for i in range(m.n_slots)
                     if slots[i, K.SL_ACTIVE] != 0.0 and src.is_beam]
            t_exit = min(exits) if exits else inf
            t_snap = self.snap_times[snap_i] if snap_i < len(self.snap_times) else inf
            t_next = min(t_end, next_arrival, t_exit, sched.next_change(t), t_snap)
            if t_next > t:
                k = int(np.searchsorted(pend_t, t_next, side="right"))
                obs_t = pend_t[:k]
                obs_out = np.zeros(k)
                status, t_new, h, pos, ns, nv = K.propagate(
                    psi, t, t_next, thr, h, self.gen, self.ops.indptr, self.ops.cols, self.ops.vals,
                    self.ops.tids, seg, slots, opt.rtol, opt.atol, self.h_max, cache_h, self._Ec,
                    self._Ei, self._coef, obs_t, obs_out, 0, oip, oc, ov, ou, ow)
                stats["steps"] += ns
                stats["norm_violations"] += nv
                # consume observations
                for q in range(pos):
                    rid = pend_id[q]
                    if rid < 0:
                        tq = pend_t[q]
                        if not (fb.active and any(s <= tq < e for s, e in dark[-3:])):
                            norm_sum += obs_out[q]
                            norm_n += 1
                        cs = 0.0
                        for i in range(m.n_slots):
                            g = K.coupling_at(tq, slots[i]) / gmax
                            cs += g * g
                        coup_sum += cs
                        coup_n += 1
                    else:
                        arr = open_recs[rid]
                        arr[pend_j[q]] = obs_out[q]
                        if pend_j[q] == n_tau - 1:
                            rec_sum += arr
                            rec_sumsq += arr * arr
                            n_records += 1
                            del open_recs[rid]
                if pos:
                    pend_t = pend_t[pos:]
                    pend_id = pend_id[pos:]
                    pend_j = pend_j[pos:]
                if status == K.STATUS_JUMP:
                    t = t_new
                    stats["jumps"] += 1
                    alpha = K.alpha_at(t, seg) if self._displaced else 0j
                    rates, outs = self.jump_rates(psi, alpha)
                    tot = rates.sum()
                    if tot <= 0:
                        raise TrajectoryError(f"jump at t={t} with zero total rate")
                    j = int(np.searchsorted(np.cumsum(rates), rng.random() * tot, side="right"))
                    j = min(j, len(rates) - 1)
                    psi = outs[j] / sqrt(rates[j])
                    thr = rng.random()
                    code = self.chan[j][2]
                    if code >= 0 and t >= 0.0:
                        click_t.append(t)
                        click_c.append(code)
                        if code == self.herald_code:
                            stats["heralds"] += 1
                            if t >= arm_until:
                                arm_until = t + (fb.latency + fb.t_fb if fb.enabled else 0.0)
                                if fb.active:
                                    before = len(sched.windows)
                                    on_herald(sched, t, fb)
                                    if len(sched.windows) > before:
                                        dark.append(sched.windows[-1])
                                if n_tau and t + tau_max <= t_end:
                                    stats["armed"] += 1
                                    rid = next_rec
                                    next_rec += 1
                                    open_recs[rid] = np.zeros(n_tau)
                                    pend_t = np.concatenate([pend_t, t + self.taus])
                                    pend_id = np.concatenate([pend_id, np.full(n_tau, rid)])
                                    pend_j = np.concatenate([pend_j, np.arange(n_tau)])
                                    order = np.argsort(pend_t, kind="stable")
                                    pend_t, pend_id, pend_j = pend_t[order], pend_id[order], pend_j[order]
                            elif fb.active and fb.retrigger == "extend":
                                on_herald(sched, t, fb)
                                if sched.windows:
                                    dark[-1:] = [sched.windows[-1]]
                    mult, seg = self._sync_drive(sched, t, mult, seg)
                    continue
                t = t_new
            t = t_next if t_next > t else t
            # events at t
            mult, seg = self._sync_drive(sched, t, mult, seg)
            if src.is_beam:
                for i in range(m.n_slots):
                    if slots[i, K.SL_ACTIVE] != 0.0 and slots[i, K.SL_TC] + slots[i, K.SL_HALFWIN] <= t:
                        psi = self._exit_slot(psi, i, rng)
                        slots[i, K.SL_ACTIVE] = 0.0
                        if queue:
                            queue.popleft()
                            psi = self._admit(psi, slots, i, t, rng)
                while next_arrival <= t:
                    stats["arrivals"] += 1
                    free = [i for i in range(m.n_slots) if slots[i, K.SL_ACTIVE] == 0.0]
                    if free:
                        psi = self._admit(psi, slots, free[0], t, rng)
                    elif len(queue) < src.queue_max:
                        queue.append(next_arrival)
                        stats["queued"] += 1
                    else:
                        stats["dropped"] += 1
                    next_arrival += rng.exponential(1.0 / src.rate)
            while snap_i < len(self.snap_times) and self.snap_times[snap_i] <= t:
                snaps.append(self._snapshot(psi))
                snap_i += 1
            sched.prune(t - 1.0)

        record = ClickRecord(np.array(click_t, float), np.array(click_c, np.int8),
                             np.full(len(click_t), trajectory_id, np.int64),
                             [(trajectory_id, 0.0, t_end)],
                             [(trajectory_id, s, e) for s, e in dark])
        res = TrajectoryResult(record, n_tau, rec_sum, rec_sumsq, n_records, norm_sum, norm_n,
                               coup_sum, coup_n, np.array(snaps) if snaps else None, stats)
        return res

    def _admit(self, psi, slots, i, t, rng):
        tr = self.source.geometry.sample(rng, t)
        slots[i] = transit_row(tr, self.source.geometry, self.model.g_max)
        return self._enter_slot(psi, i, self._draw_atom(rng))

    def _sync_drive(self, sched, t, mult, seg):
        new = sched.multiplier(t)
        if new == mult:
            return mult, seg
        # the empty-cavity amplitude is continuous across a drive edge
        a = K.alpha_at(t, seg) if self._displaced else 0j
        return new, self.seg_for(t, complex(a), self.model.drive * new)

    def _snapshot(self, psi):
        x = psi / np.linalg.norm(psi)
        if self.record.snapshot_kind == "state":
            return x.copy()
        return reduced_atom(x, self.model, 0)


def run_trajectory(model, source=None, feedback=None, duration=10.0, seed=0, options=None,
                   record=None, trajectory_id=0):
    """Single trajectory; returns its :class:`TrajectoryResult` (``.record`` is the ClickRecord)."""
    from .rng import trajectory_rng
    sim = Simulator(model, source, feedback, options, record)
    return sim.run(duration, trajectory_rng(seed, trajectory_id), trajectory_id)


# -- building blocks exposed for testing ----------------------------------------------

def step_nojump(sim, state, dt, slots=None, seg=None):
    """Advance ``state`` by ``dt`` under the no-jump generator (threshold 0)."""
    slots = sim._slots_init() if slots is None else slots
    seg = sim.seg_for(state.t, complex(sim.alpha_ss()), sim.model.drive) if seg is None else seg
    cache_h = np.array([-1.0])
    (oip, oc, ov), ou, ow = sim.target
    status, t, h, pos, ns, nv = K.propagate(
        state.psi, state.t, state.t + dt, 0.0, min(dt, sim.h_max), sim.gen, sim.ops.indptr,
        sim.ops.cols, sim.ops.vals, sim.ops.tids, seg, slots, sim.options.rtol, sim.options.atol,
        sim.h_max, cache_h, sim._Ec, sim._Ei, sim._coef, np.zeros(0), np.zeros(0), 0,
        oip, oc, ov, ou, ow)
    state.t = t
    return state, dict(steps=ns, norm_violations=nv)


def sample_jump(sim, state, rng, t_max, slots=None, seg=None):
    """Norm-threshold waiting time from ``state`` (normalized); returns (time or None, channel index)."""
    slots = sim._slots_init() if slots is None else slots
    seg = sim.seg_for(state.t, complex(sim.alpha_ss()), sim.model.drive) if seg is None else seg
    thr = rng.random()
    cache_h = np.array([-1.0])
    (oip, oc, ov), ou, ow = sim.target
    status, t, h, pos, ns, nv = K.propagate(
        state.psi, state.t, t_max, thr, sim.h_max / 10, sim.gen, sim.ops.indptr, sim.ops.cols,
        sim.ops.vals, sim.ops.tids, seg, slots, sim.options.rtol, sim.options.atol, sim.h_max,
        cache_h, sim._Ec, sim._Ei, sim._coef, np.zeros(0), np.zeros(0), 0, oip, oc, ov, ou, ow)
    state.t = t
    if status != K.STATUS_JUMP:
        return None, -1
    alpha = K.alpha_at(t, seg) if sim._displaced else 0j
    rates, _ = sim.jump_rates(state.psi, alpha)
    j = int(np.searchsorted(np.cumsum(rates), rng.random() * rates.sum(), side="right"))
    return t, min(j, len(rates) - 1)


def apply_jump(sim, state, channel, alpha=0j):
    """Collapse ``state`` with channel ``channel``; the result has unit norm."""
    op, beta, _ = sim.chan[channel]
    v = op @ state.psi
    if beta != 0.0:
        v = v + beta * alpha * state.psi
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise TrajectoryError("jump channel annihilates the state")
    state.psi = v / nrm
    return state
