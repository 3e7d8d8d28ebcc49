"""Parallel trajectory ensembles with worker-count independent results.

Trajectory ``i`` always uses the stream spawned from (master seed, i); the
coordinator hands out contiguous index blocks and reassembles the results in
index order, so the merged output is bitwise identical for any worker count.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import multiprocessing as mp

import numpy as np

from .rng import trajectory_rng
from .trajectory import Simulator, ClickRecord, AtomSource, RecordSpec, EngineOptions
from .feedback import FeedbackConfig


@dataclass(frozen=True)
class Experiment:
    """Everything one trajectory needs; picklable."""
    model: object
    source: AtomSource = AtomSource()
    feedback: FeedbackConfig = FeedbackConfig()
    options: EngineOptions = EngineOptions()
    record: RecordSpec = RecordSpec()
    duration: float = 10.0

    def with_(self, **kw):
        from dataclasses import replace
        return replace(self, **kw)


@dataclass
class EnsembleResult:
    record: ClickRecord
    n_traj: int
    taus: np.ndarray
    rec_sum: np.ndarray          # (n_traj, n_tau)
    rec_sumsq: np.ndarray
    n_records: np.ndarray        # (n_traj,)
    norm_sum: np.ndarray
    norm_n: np.ndarray
    coupling: float
    snapshots: list
    stats: dict = field(default_factory=dict)

    @property
    def realized_n_eff(self):
        return self.coupling


def resolve_workers(workers=None):
    if workers is None:
        env = os.environ.get("QBEAT_WORKERS", "").strip()
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


_SIM_CACHE = {}


def _simulator(exp):
    key = id(exp)
    sim = _SIM_CACHE.get(key)
    if sim is None or sim[0] is not exp:
        _SIM_CACHE.clear()
        sim = (exp, Simulator(exp.model, exp.source, exp.feedback, exp.options, exp.record))
        _SIM_CACHE[key] = sim
    return sim[1]


def _run_block(exp, seed, lo, hi):
    sim = _simulator(exp)
    return [sim.run(exp.duration, trajectory_rng(seed, i), i) for i in range(lo, hi)]


def _blocks(n, workers):
    size = max(1, -(-n // (workers * 4)))
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def run_ensemble(exp, n_traj, seed, workers=None, progress=None):
    """Run ``n_traj`` trajectories of ``exp``; results merged in index order."""
    workers = resolve_workers(workers)
    results = []
    if workers == 1 or n_traj < 2:
        for lo, hi in _blocks(n_traj, 1):
            results.extend(_run_block(exp, seed, lo, hi))
            if progress:
                progress(hi, n_traj)
    else:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futs = [pool.submit(_run_block, exp, seed, lo, hi) for lo, hi in _blocks(n_traj, workers)]
            for f in futs:
                results.extend(f.result())
                if progress:
                    progress(len(results), n_traj)
    return merge_results(results, exp)


def merge_results(results, exp):
    n_tau = len(exp.record.taus)
    N = len(results)
    rec_sum = np.zeros((N, n_tau))
    rec_sumsq = np.zeros((N, n_tau))
    n_rec = np.zeros(N, np.int64)
    norm_sum = np.zeros(N)
    norm_n = np.zeros(N, np.int64)
    c_sum = 0.0
    c_n = 0
    stats = {}
    snaps = []
    for i, r in enumerate(results):
        if n_tau:
            rec_sum[i] = r.rec_sum
            rec_sumsq[i] = r.rec_sumsq
        n_rec[i] = r.n_records
        norm_sum[i] = r.norm_sum
        norm_n[i] = r.norm_n
        c_sum += r.coupling_sum
        c_n += r.coupling_n
        snaps.append(r.snapshots)
        for k, v in r.stats.items():
            stats[k] = stats.get(k, 0) + v
    return EnsembleResult(ClickRecord.merge(r.record for r in results), N,
                          np.asarray(exp.record.taus, float), rec_sum, rec_sumsq, n_rec,
                          norm_sum, norm_n, c_sum / c_n if c_n else 0.0, snaps, stats)
