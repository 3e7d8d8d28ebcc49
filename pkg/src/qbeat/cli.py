"""qbeat <subcommand> --config <path> [--seed N] [--workers N] [--out DIR]

Exit codes: 0 all checks passed, 1 an internal check failed, 2 bad usage or config.
On failure a JSON report goes to stderr and to ``failure.json`` in the output directory.
"""
import argparse
import json
import sys
from math import pi
from pathlib import Path

import numpy as np

from .config import load_config, ConfigError, resolve_seed_workers
from .io import write_csv
from .svg import Figure

SUBCOMMANDS = ("validate", "beat", "scan-epsilon", "scan-photon", "theory")
EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class Checks:
    def __init__(self):
        self.failed = []

    def require(self, ok, name, **detail):
        if not ok:
            self.failed.append(dict(check=name, **{k: _jsonable(v) for k, v in detail.items()}))
        return ok


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def _g2_rows(est):
    pairs = est.counts if est.counts is not None else np.zeros(len(est.tau), np.int64)
    return [(t, g, e, p) for t, g, e, p in zip(est.tau, est.g2, est.stderr, pairs)]


def _check_estimate(checks, est, label):
    checks.require(est.ok, "estimate-not-empty", run=label)
    if est.ok:
        checks.require(bool(np.all(np.isfinite(est.g2)) and np.all(est.g2 >= -1e-12)), "g2-nonnegative",
                       run=label)


def cmd_theory(cfg, args, out, checks):
    from .experiments import theory_rows
    rows = theory_rows(cfg)
    cols = ["delta_mhz", "delta_jump_rad_us", "gamma_decoh_rad_us", "ratio", "two_delta_over_gamma",
            "ac_stark_rad_us"]
    table = [(r[2] / (2 * pi), r[4], r[5], r[6], r[7], r[8]) for r in rows]
    path = write_csv(out / "theory.csv", cols, table, cfg, args.seed)
    for r in table:
        checks.require(abs(r[3] - r[4]) <= 1e-12 * max(1.0, abs(r[4])), "ratio-identity", delta_mhz=r[0])
    sys.stdout.write(path.read_text(encoding="utf-8"))


def cmd_validate(cfg, args, out, checks):
    from .experiments import validate
    rep = validate(cfg, seed=args.seed, workers=args.workers)
    write_csv(out / "validate.csv", ["t_us", "trace_distance"], zip(rep.times, rep.distances), cfg, args.seed,
              extra=dict(dim=rep.extra["dim"], trajectories=rep.extra["trajectories"],
                         trace_error=f"{rep.trace_err:.3g}", hermiticity_error=f"{rep.herm_err:.3g}"))
    print(f"validate: max trace distance {rep.distances.max():.4f} over {len(rep.times)} checkpoints "
          f"({rep.extra['trajectories']} trajectories, dim {rep.extra['dim']})")
    checks.require(bool(np.all(rep.distances < rep.tolerance)), "trace-distance", max=float(rep.distances.max()),
                   tolerance=rep.tolerance)
    checks.require(rep.trace_err < 1e-8, "oracle-trace", error=rep.trace_err)
    checks.require(rep.herm_err < 1e-10, "oracle-hermiticity", error=rep.herm_err)
    checks.require(rep.norm_violations == 0, "norm-monotonic", count=rep.norm_violations)


def cmd_beat(cfg, args, out, checks):
    from .experiments import run_beat, beat_band
    from .analysis import post_revival_fit, jackknife, FitError
    from .correlator import fft_peak
    with_fb = run_beat(cfg, args.seed, args.workers, enabled=True)
    without = run_beat(cfg, args.seed, args.workers, enabled=False)
    band = beat_band(cfg)
    fig = Figure("conditional intensity", "tau (us)", "g2(tau)")
    fit_rows = []
    for run, name in ((without, "nofeedback"), (with_fb, "feedback")):
        est = run.estimate
        _check_estimate(checks, est, name)
        checks.require(run.result.stats.get("norm_violations", 0) == 0, "norm-monotonic", run=name)
        write_csv(out / f"g2_{name}.csv", ["tau_us", "g2", "stderr", "pairs"], _g2_rows(est), cfg, args.seed,
                  extra=dict(run=name, epsilon=run.epsilon, heralds=est.n_heralds,
                             realized_n_eff=f"{run.result.coupling:.4f}"))
        if not est.ok:
            continue
        fig.line(est.tau, est.g2, label=name.replace("nofeedback", "no feedback"))
        f, fr, pw = fft_peak(est.tau, est.g2)
        keep = fr <= 20.0
        write_csv(out / f"fft_{name}.csv", ["freq_MHz", "power"], zip(fr[keep], pw[keep]), cfg, args.seed,
                  extra=dict(peak_MHz=f"{f:.4f}"))
        try:
            # both runs fitted over the same post-revival window
            fit = jackknife(est, lambda tr: post_revival_fit(
                tr, run.t_on, cfg["analysis.guard_us"], cfg["analysis.span_us"], f_band=band, drift=True))
            fit_rows.append((name, fit.amplitude, fit.err("amplitude"), fit.freq, fit.err("freq"),
                             fit.phase, fit.err("phase"), fit.decay, fit.converged))
        except FitError as e:
            fit_rows.append((name, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, False))
            print(f"beat: fit skipped for {name}: {e}", file=sys.stderr)
    write_csv(out / "beat_fits.csv", ["run", "amplitude", "amp_err", "freq_MHz", "freq_err", "phase_rad",
                                      "phase_err", "decay_per_us", "converged"], fit_rows, cfg, args.seed)
    fig.save(out / "beat.svg")
    print(f"beat: wrote {out}/g2_feedback.csv, g2_nofeedback.csv, beat_fits.csv, beat.svg")


def cmd_scan_epsilon(cfg, args, out, checks):
    from .experiments import scan_feedback_intensity
    scan, runs = scan_feedback_intensity(cfg, seed=args.seed, workers=args.workers)
    x = scan.extra
    for r in runs:
        _check_estimate(checks, r.estimate, f"epsilon={r.epsilon}")
        checks.require(r.result.stats.get("norm_violations", 0) == 0, "norm-monotonic", epsilon=r.epsilon)
        write_csv(out / f"g2_eps_{r.epsilon:g}.csv", ["tau_us", "g2", "stderr", "pairs"], _g2_rows(r.estimate),
                  cfg, args.seed, extra=dict(epsilon=r.epsilon))
    rows = zip(scan.values, x["amp_ratio"], x["amp_err"], x["phase_shift"], x["phase_err"], x["converged"])
    write_csv(out / "scan_epsilon.csv", ["epsilon", "amp_ratio", "amp_err", "phase_shift_rad", "phase_err",
                                         "converged"], rows, cfg, args.seed,
              extra=dict(t_fb_us=cfg["feedback.t_fb_us"]))
    Figure("recovered amplitude", "normalized feedback intensity", "amplitude / no-feedback amplitude") \
        .points(scan.values, x["amp_ratio"], x["amp_err"]).save(out / "scan_epsilon_amplitude.svg")
    Figure("phase shift", "normalized feedback intensity", "phase shift (rad)") \
        .points(scan.values, x["phase_shift"], x["phase_err"]).save(out / "scan_epsilon_phase.svg")
    print("epsilon  amp_ratio  phase_shift")
    for e, a, p in zip(scan.values, x["amp_ratio"], x["phase_shift"]):
        print(f"{e:7.3f}  {a:9.3f}  {p:11.3f}")


def cmd_scan_photon(cfg, args, out, checks):
    from .experiments import scan_photon_number, photon_theory
    scan, traces = scan_photon_number(cfg, seed=args.seed, workers=args.workers)
    x = scan.extra
    pred = photon_theory(cfg)
    pred_slope = -pred.shift_sign * 2 * pred.delta_jump / (2 * pi)
    rows = zip(scan.values, x["freq"], x["freq_err"])
    write_csv(out / "scan_photon.csv", ["n_photons", "freq_MHz", "freq_err"], rows, cfg, args.seed,
              extra=dict(slope_MHz_per_photon=f"{scan.slope:.6g}", slope_err=f"{scan.slope_err:.3g}",
                         predicted_slope=f"{pred_slope:.6g}",
                         decay_slope=f"{x.get('decay_slope', np.nan):.6g}",
                         predicted_decay_slope=f"{pred.gamma_decoh:.6g}"))
    for n, tr in zip(scan.values, traces):
        _check_estimate(checks, tr, f"n={n}")
    fig = Figure("beat frequency vs photon number", "intracavity photons", "frequency (MHz)")
    fig.points(scan.values, x["freq"], x["freq_err"], label="fits")
    if np.isfinite(scan.slope):
        fig.line(scan.values, scan.intercept + scan.slope * scan.values, label="regression")
    fig.save(out / "scan_photon.svg")
    print(f"scan-photon: slope {scan.slope:.4g} +/- {scan.slope_err:.2g} MHz/photon "
          f"(closed form {pred_slope:.4g})")


COMMANDS = {"theory": cmd_theory, "validate": cmd_validate, "beat": cmd_beat,
            "scan-epsilon": cmd_scan_epsilon, "scan-photon": cmd_scan_photon}


def parser():
    p = argparse.ArgumentParser(prog="qbeat", description="heralded quantum-beat simulator")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="config file or preset name (paper-fig2, four-level)")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides ensemble.seed)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (env QBEAT_WORKERS)")
    p.add_argument("--out", default="out", help="output directory")
    return p


def _fail(out, code, report):
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text, file=sys.stderr)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "failure.json").write_text(text + "\n", encoding="utf-8")
    except OSError:
        pass
    return code


def main(argv=None):
    try:
        args = parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        args.seed, args.workers = resolve_seed_workers(cfg, args.seed, args.workers)
    except (ConfigError, ValueError) as e:
        return _fail(out, EXIT_USAGE, dict(status="config-error", error=str(e),
                                           line=getattr(e, "line", None)))
    cfg = cfg.with_(ensemble__seed=args.seed)
    out.mkdir(parents=True, exist_ok=True)
    checks = Checks()
    try:
        COMMANDS[args.subcommand](cfg, args, out, checks)
    except Exception as e:  # surfaced as a machine-readable report
        return _fail(out, EXIT_CHECK, dict(status="error", subcommand=args.subcommand,
                                           error=f"{type(e).__name__}: {e}"))
    if checks.failed:
        return _fail(out, EXIT_CHECK, dict(status="check-failed", subcommand=args.subcommand,
                                           failed=checks.failed))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
