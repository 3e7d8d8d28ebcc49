"""Per-trajectory random streams.

Each trajectory index gets its own PCG64 generator spawned from the master
seed, so results do not depend on how indices are distributed over workers.
"""
import numpy as np


def trajectory_seed(master_seed, index):
    return np.random.SeedSequence(int(master_seed), spawn_key=(0, int(index)))


def trajectory_rng(master_seed, index):
    return np.random.Generator(np.random.PCG64(trajectory_seed(master_seed, index)))


def substream(master_seed, *key):
    """Generator for auxiliary uses (calibration, synthetic data) keyed by integers."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(1,) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))
