import os
import sys
from math import pi

import numpy as np
import pytest

from qbeat.atoms import FourLevelScheme
from qbeat.model import SystemModel

TWO_PI = 2 * pi


def four_level(g=TWO_PI * 1.0, kappa=TWO_PI * 2.0, gamma=TWO_PI * 6.0, split=0.0, delta=0.0,
               nv=1, nh=0, drive=0.0, **kw):
    """Small four-level model used across tests."""
    return SystemModel(FourLevelScheme(ground_split=split, delta=delta), g, kappa, gamma, drive=drive,
                       n_max_v=nv, n_max_h=nh, **kw)


# small static four-level beat run used by the command-line tests
TINY = """\
system.scheme = "four-level"
system.g_mhz = 1.5
system.n_photons = 0.3
system.leg_delta_mhz = 0.6
system.b_gauss = 3.0
system.n_max_v = 1
system.n_max_h = 0
system.k_max = 1
beam.enabled = false
beam.initial = "mixture"
feedback.enabled = true
feedback.t_fb_us = 1.0
detection.herald = "V"
detection.target = "V"
ensemble.trajectories = 8
ensemble.duration_us = 60.0
ensemble.warmup_us = 2.0
analysis.max_tau_us = 4.0
analysis.span_us = 2.5
"""


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_report_header(config):
    from qbeat import _jit
    return f"qbeat backend: {_jit.BACKEND}; cpus: {os.cpu_count()}; python {sys.version.split()[0]}"


# one summary line per acceptance criterion, printed after the run
_CRITERIA = {}


@pytest.fixture
def criterion():
    def report(n, ok, detail=""):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[n] = line
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
