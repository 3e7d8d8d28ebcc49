import json
import os
import subprocess
import sys

import numpy as np
import pytest

from qbeat.cli import main
from qbeat.config import (parse_config, load_config, ConfigError, RunConfig, PRESETS, build_model,
                          resolve_seed_workers)
from qbeat.detector import add_dark_counts, apply_dead_time, detect
from qbeat.ensemble import resolve_workers
from qbeat.io import write_csv, read_csv, fmt
from qbeat.trajectory import ClickRecord

from conftest import TINY


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def qbeat(*args, env=None):
    e = dict(os.environ, **(env or {}))
    return subprocess.run([sys.executable, "-m", "qbeat", *map(str, args)], capture_output=True, text=True,
                          env=e, timeout=900)


# -- config -----------------------------------------------------------------------------

def test_empty_config_is_all_defaults():
    cfg = parse_config("")
    assert cfg.values == RunConfig().values
    assert parse_config("# only a comment\n\n").values == cfg.values


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_load_and_build(name):
    cfg = load_config(name)
    m = build_model(cfg)
    assert m.dim <= cfg["system.dim_budget"]


def test_values_and_comments():
    cfg = parse_config('system.g_mhz = 2.5   # inline\nanalysis.epsilons = [0.0, 1.0]\nbeam.enabled = false\n')
    assert cfg["system.g_mhz"] == 2.5
    assert cfg["analysis.epsilons"] == [0.0, 1.0]
    assert cfg["beam.enabled"] is False


@pytest.mark.parametrize("text, line, match", [
    ("system.g_mhz = 1.0\nfeedback.epsilon = 1.5\n", 2, "out of range"),
    ("system.nope = 1\n", 1, "unknown key"),
    ("bogus.key = 1\n", 1, "unknown section"),
    ("system.g_mhz = 1\nsystem.g_mhz = 2\n", 2, "duplicate"),
    ("system.g_mhz 1.0\n", 1, "expected"),
    ('system.g_mhz = "fast"\n', 1, "expects"),
    ("system.ground_f = 3\nsystem.excited_f = 5\n", None, "forbidden"),
])
def test_config_errors_name_the_line(text, line, match):
    with pytest.raises(ConfigError, match=match) as e:
        parse_config(text)
    if line is not None:
        assert e.value.line == line


def test_echo_round_trips():
    cfg = load_config("paper-fig2")
    again = parse_config(cfg.echo())
    assert again.values == cfg.values
    assert again.sha256 == cfg.sha256


def test_with_overrides_are_validated():
    cfg = RunConfig()
    assert cfg.with_(feedback__epsilon=0.5)["feedback.epsilon"] == 0.5
    with pytest.raises(ConfigError):
        cfg.with_(feedback__epsilon=2.0)


def test_workers_env_fallback(monkeypatch):
    monkeypatch.setenv("QBEAT_WORKERS", "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    cfg = RunConfig().with_(ensemble__workers=5)
    assert resolve_seed_workers(cfg, 9, None) == (9, 5)


# -- csv --------------------------------------------------------------------------------

def test_csv_header_and_line_endings(tmp_path):
    cfg = RunConfig()
    p = write_csv(tmp_path / "x.csv", ["a", "b", "ok"], [(1, 0.5, True), (2, float("nan"), False)], cfg, 7,
                  extra={"slope": 0.25})
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    text = raw.decode("utf-8")
    assert text.startswith(f"# config_sha256 = {cfg.sha256}\n# seed = 7\n# version = ")
    meta, cols, data = read_csv(p)
    assert meta["slope"] == "0.25" and meta["seed"] == "7"
    assert cols == ["a", "b", "ok"]
    assert data[0].tolist() == [1.0, 0.5, 1.0] and np.isnan(data[1, 1])


def test_number_format():
    assert fmt(0.1) == "0.1" and fmt(3) == "3" and fmt(float("inf")) == "inf"
    assert float(fmt(1 / 3)) == pytest.approx(1 / 3, rel=1e-9)


# -- detector ----------------------------------------------------------------------------

def test_dark_counts_are_poisson_per_channel():
    rec = ClickRecord(spans=[(0, 0.0, 1000.0), (1, 0.0, 1000.0)])
    out = add_dark_counts(rec, 0.5, seed=3)
    for code in (0, 1):
        n = int(np.sum(out.channels == code))
        assert abs(n - 1000) < 3 * np.sqrt(1000)
    assert np.all(np.diff(out.times[out.trajectory_ids == 0]) >= 0)
    again = add_dark_counts(rec, 0.5, seed=3)
    assert np.array_equal(out.times, again.times)


def test_dead_time_is_non_paralyzable_per_detector():
    rec = ClickRecord(np.array([0.0, 0.05, 0.08, 0.12, 0.3, 0.0]), np.array([0, 0, 0, 0, 0, 1], np.int8),
                      np.zeros(6, np.int64), [(0, 0.0, 1.0)], [])
    out = apply_dead_time(rec, 0.1)
    h = out.times[out.channels == 0]
    assert h.tolist() == [0.0, 0.12, 0.3]
    assert out.times[out.channels == 1].tolist() == [0.0]


def test_ideal_detector_is_identity():
    rec = ClickRecord(np.array([0.1, 0.2]), np.array([0, 1], np.int8), np.zeros(2, np.int64), [(0, 0.0, 1.0)], [])
    assert detect(rec) is rec


# -- command line --------------------------------------------------------------------------

def test_theory_subcommand(tmp_path):
    assert main(["theory", "--config", "paper-fig2", "--out", str(tmp_path)]) == 0
    meta, cols, data = read_csv(tmp_path / "theory.csv")
    assert cols[0] == "delta_mhz" and "ratio" in cols
    r, t = cols.index("ratio"), cols.index("two_delta_over_gamma")
    assert np.allclose(data[:, r], data[:, t], rtol=1e-12)


def test_bad_config_exit_code_and_report(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("system.g_mhz = 1.0\nfeedback.epsilon = 1.5\n")
    out = tmp_path / "out"
    r = qbeat("beat", "--config", bad, "--out", out)
    assert r.returncode == 2
    rep = json.loads((out / "failure.json").read_text())
    assert rep["status"] == "config-error" and rep["line"] == 2
    assert json.loads(r.stderr) == rep


def test_usage_errors():
    assert main(["frobnicate", "--config", "paper-fig2"]) == 2
    assert main(["beat"]) == 2


def test_missing_config(tmp_path):
    assert main(["beat", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == 2


def test_beat_outputs_identical_for_any_worker_count(tiny, tmp_path):
    outs = []
    for w in (1, 4, 8):
        out = tmp_path / f"w{w}"
        r = qbeat("beat", "--config", tiny, "--seed", 5, "--workers", w, "--out", out)
        assert r.returncode == 0, r.stderr
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert {"g2_feedback.csv", "g2_nofeedback.csv", "beat_fits.csv", "beat.svg"} <= set(names)
    for other in outs[1:]:
        assert sorted(p.name for p in other.iterdir()) == names
        for n in names:
            assert (outs[0] / n).read_bytes() == (other / n).read_bytes(), n


def test_seed_changes_output(tiny, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["beat", "--config", str(tiny), "--seed", "1", "--out", str(a)]) == 0
    assert main(["beat", "--config", str(tiny), "--seed", "2", "--out", str(b)]) == 0
    assert (a / "g2_feedback.csv").read_bytes() != (b / "g2_feedback.csv").read_bytes()
    meta, cols, data = read_csv(a / "g2_feedback.csv")
    assert cols == ["tau_us", "g2", "stderr", "pairs"] and meta["seed"] == "1"


def test_scan_photon_four_level(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text(PRESETS["four-level"] + "ensemble.trajectories = 40\nanalysis.photons = [0.05, 0.2]\n")
    assert main(["scan-photon", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    meta, cols, data = read_csv(tmp_path / "scan_photon.csv")
    assert cols == ["n_photons", "freq_MHz", "freq_err"] and data.shape == (2, 3)
    for k in ("slope_MHz_per_photon", "slope_err", "predicted_slope", "decay_slope", "predicted_decay_slope"):
        assert k in meta
    assert "<svg" in (tmp_path / "scan_photon.svg").read_text()
