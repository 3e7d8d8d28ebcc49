"""Herald-triggered drive gating.

A detection on the herald channel opens a window [t + latency, t + latency + T_fb)
during which the drive power is the fraction ``epsilon`` of its steady value,
so the amplitude multiplier is sqrt(epsilon). Intervals are half-open.
"""
from bisect import bisect_right
from dataclasses import dataclass
from math import sqrt, isfinite

RETRIGGER_POLICIES = ("ignore", "extend")


@dataclass(frozen=True)
class FeedbackConfig:
    enabled: bool = False
    epsilon: float = 1.0
    t_fb: float = 3.0
    latency: float = 0.0
    retrigger: str = "ignore"
    # optional finite EOM edge: linear ramp approximated by ``rise_steps`` stairs
    rise_time: float = 0.0
    rise_steps: int = 8

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"feedback epsilon must lie in [0, 1], got {self.epsilon}")
        if self.t_fb < 0 or not isfinite(self.t_fb):
            raise ValueError("feedback window length must be >= 0")
        if self.latency < 0:
            raise ValueError("feedback latency must be >= 0")
        if self.retrigger not in RETRIGGER_POLICIES:
            raise ValueError(f"retrigger must be one of {RETRIGGER_POLICIES}")
        if self.rise_time < 0 or self.rise_steps < 1:
            raise ValueError("rise_time must be >= 0 and rise_steps >= 1")

    @property
    def multiplier(self):
        return sqrt(self.epsilon)

    @property
    def active(self):
        """True when a herald actually changes the drive."""
        return self.enabled and self.epsilon < 1.0 and self.t_fb > 0


class DriveSchedule:
    """Piecewise-constant amplitude multiplier built from feedback windows.

    ``segments`` is the time-ordered, non-overlapping list of
    (start, end, multiplier); outside every segment the multiplier is 1.
    """

    def __init__(self, config=None):
        self.config = config if config is not None else FeedbackConfig()
        self.windows = []
        self.segments = []

    def multiplier(self, t):
        i = bisect_right(self._starts, t) - 1
        if i >= 0:
            s, e, m = self.segments[i]
            if s <= t < e:
                return m
        return 1.0

    def next_change(self, t):
        """First segment edge strictly after ``t`` (inf if none)."""
        for s, e, _ in self.segments:
            if s > t:
                return s
            if e > t:
                return e
        return float("inf")

    def window_end(self):
        return self.windows[-1][1] if self.windows else float("-inf")

    def prune(self, t):
        """Forget windows whose effect ended at or before ``t``."""
        tail = self.config.rise_time
        keep = [w for w in self.windows if w[1] + tail > t]
        if len(keep) != len(self.windows):
            self.windows = keep
            self._rebuild()

    def _rebuild(self):
        segs = []
        for s, e in self.windows:
            segs.extend(_window_segments(s, e, self.config))
        self.segments = segs
        self._starts = [s for s, _, _ in segs]

    _starts = ()


def _window_segments(start, end, config):
    m = config.multiplier
    if config.rise_time <= 0:
        return [(start, end, m)]
    # linear EOM edges as staircases: down from start, up from end
    n = config.rise_steps
    dt = config.rise_time / n
    segs = []
    t = start
    for k in range(n):
        if t >= end:
            break
        segs.append((t, min(t + dt, end), 1.0 + (m - 1.0) * (k + 1) / (n + 1)))
        t += dt
    if t < end:
        segs.append((t, end, m))
    t = end
    for k in range(n):
        segs.append((t, t + dt, 1.0 + (m - 1.0) * (n - k) / (n + 1)))
        t += dt
    return segs


def on_herald(schedule, t_click, config=None):
    """Register a herald at ``t_click``; returns the (updated) schedule."""
    config = schedule.config if config is None else config
    if not config.active:
        return schedule
    schedule.config = config
    start = t_click + config.latency
    end = start + config.t_fb
    # a herald before the previous window (including its ramp) has closed is a retrigger
    if start < schedule.window_end() + config.rise_time:
        if config.retrigger == "ignore":
            return schedule
        s0, e0 = schedule.windows[-1]
        schedule.windows[-1] = (s0, max(e0, end))
    else:
        schedule.windows.append((start, end))
    schedule._rebuild()
    return schedule


def drive_amplitude(schedule, e_steady, t):
    """Drive amplitude at ``t``: ``e_steady`` times the schedule multiplier."""
    return e_steady * schedule.multiplier(t)
