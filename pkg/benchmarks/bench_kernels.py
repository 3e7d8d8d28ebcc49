"""Compare the numba kernels against the numpy fallback.

Each backend runs in its own interpreter because the switch is read at import
time. Usage: python benchmarks/bench_kernels.py [--duration US] [--repeat N]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from qbeat import _jit
from qbeat.config import load_config
from qbeat.experiments import build_experiment
from qbeat.ensemble import run_ensemble
from qbeat.kernels import pair_histogram

duration, repeat = float(sys.argv[1]), int(sys.argv[2])
cfg = load_config("paper-fig2").with_(ensemble__duration_us=duration, ensemble__trajectories=1)
exp = build_experiment(cfg)

def traj():
    return run_ensemble(exp, 1, seed=3, workers=1)

def hist():
    rng = np.random.default_rng(0)
    her = np.sort(rng.uniform(0, 1e4, 20000))
    tar = np.sort(rng.uniform(0, 1e4, 200000))
    counts = np.zeros(200, np.int64)
    pair_histogram(her, tar, 0.05, 200, counts)
    return counts

out = {"backend": _jit.BACKEND}
for name, fn in (("trajectory", traj), ("pair_histogram", hist)):
    t0 = time.perf_counter()
    first = fn()                      # includes compilation on the numba path
    out[name + "_first_s"] = time.perf_counter() - t0
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        r = fn()
        best = min(best, time.perf_counter() - t0)
    out[name + "_s"] = best
    if name == "trajectory":
        out["clicks"] = int(len(r.record))
        out["rec_sum"] = float(r.rec_sum.sum())
    else:
        out["pairs"] = int(np.asarray(r).sum())
print(json.dumps(out))
"""


def run(backend_off, duration, repeat):
    env = dict(os.environ)
    env["QBEAT_DISABLE_NUMBA"] = "1" if backend_off else "0"
    p = subprocess.run([sys.executable, "-c", WORKER, str(duration), str(repeat)], env=env,
                       capture_output=True, text=True, check=True)
    return json.loads(p.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--duration", type=float, default=500.0, help="trajectory length in us")
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    nb = run(False, a.duration, a.repeat)
    npy = run(True, a.duration, a.repeat)
    print(f"{'kernel':<16}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for k in ("trajectory", "pair_histogram"):
        print(f"{k:<16}{nb[k + '_s']:>12.4f}{npy[k + '_s']:>12.4f}{npy[k + '_s'] / nb[k + '_s']:>10.1f}")
    print(f"numba first call incl. compile: trajectory {nb['trajectory_first_s']:.2f} s")
    same = nb["clicks"] == npy["clicks"] and nb["pairs"] == npy["pairs"]
    rel = abs(nb["rec_sum"] - npy["rec_sum"]) / max(abs(npy["rec_sum"]), 1e-300)
    print(f"results agree: clicks {nb['clicks']} vs {npy['clicks']}, pairs {nb['pairs']} vs {npy['pairs']}, "
          f"record sum rel. diff {rel:.2e}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
