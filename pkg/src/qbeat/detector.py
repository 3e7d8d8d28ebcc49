"""Post-processing of click records for detector imperfections.

Efficiency is handled in the engine by splitting each cavity channel; dark
counts and dead time act on the recorded stream and are applied here.
"""
import numpy as np

from .rng import substream
from .trajectory import ClickRecord, CHANNELS


def add_dark_counts(record, rate, seed):
    """Superpose Poisson dark counts at ``rate`` per us on every channel of every span."""
    if rate <= 0:
        return record
    t, c, i = [record.times], [record.channels], [record.trajectory_ids]
    for tid, t0, t1 in record.spans:
        for code in range(len(CHANNELS)):
            rng = substream(seed, 7, tid, code)
            n = rng.poisson(rate * (t1 - t0))
            t.append(np.sort(rng.uniform(t0, t1, n)))
            c.append(np.full(n, code, np.int8))
            i.append(np.full(n, tid, np.int64))
    return _sorted(ClickRecord(np.concatenate(t), np.concatenate(c).astype(np.int8),
                               np.concatenate(i).astype(np.int64), list(record.spans),
                               list(record.dark_windows)))


def apply_dead_time(record, dead):
    """Non-paralyzable dead time per detector: drop clicks within ``dead`` of the last kept one."""
    if dead <= 0 or len(record) == 0:
        return record
    rec = _sorted(record)
    keep = np.ones(len(rec), bool)
    last = {}
    for k in range(len(rec)):
        key = (int(rec.trajectory_ids[k]), int(rec.channels[k]))
        t = rec.times[k]
        if key in last and t - last[key] < dead:
            keep[k] = False
        else:
            last[key] = t
    return ClickRecord(rec.times[keep], rec.channels[keep], rec.trajectory_ids[keep],
                       list(rec.spans), list(rec.dark_windows))


def detect(record, dark_rate=0.0, dead_time=0.0, seed=0):
    return apply_dead_time(add_dark_counts(record, dark_rate, seed), dead_time)


def _sorted(rec):
    order = np.lexsort((rec.channels, rec.times, rec.trajectory_ids))
    return ClickRecord(rec.times[order], rec.channels[order], rec.trajectory_ids[order],
                       list(rec.spans), list(rec.dark_windows))
