"""Flat ``section.key = value`` run configuration.

Frequencies are entered in MHz (omega / 2 pi) and converted to rad/us when
the model is built. Unknown keys, bad values and unknown sections are
rejected with the offending line number.
"""
from dataclasses import dataclass, field
from math import pi
import hashlib
import re
import json
from pathlib import Path

SECTIONS = ("system", "beam", "feedback", "detection", "ensemble", "analysis")


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


def _any(x):
    return True


def _int_ge(n):
    return lambda x: isinstance(x, int) and not isinstance(x, bool) and x >= n


def _choice(*opts):
    return lambda x: x in opts


def _floats(pred):
    return lambda xs: isinstance(xs, list) and len(xs) > 0 and all(
        isinstance(x, (int, float)) and not isinstance(x, bool) and pred(x) for x in xs)


# key -> (default, validator, description)
SCHEMA = {
    "system": {
        "scheme": ("full", _choice("full", "four-level"), "full F->F' manifold or reduced four-level atom"),
        "g_mhz": (1.5, _nonneg, "peak single-atom coupling g/2pi"),
        "kappa_mhz": (3.0, _pos, "cavity field decay kappa/2pi"),
        "gamma_mhz": (6.07, _pos, "excited-state linewidth gamma/2pi"),
        "n_photons": (1.21, _nonneg, "steady intracavity drive photon number |E/kappa|^2"),
        "delta_a_mhz": (0.0, _any, "atom - drive detuning"),
        "delta_c_mhz": (0.0, _any, "cavity - drive detuning"),
        "b_gauss": (5.0, _nonneg, "magnetic field"),
        "ground_f": (3, _int_ge(0), "ground hyperfine F"),
        "excited_f": (4, _int_ge(0), "excited hyperfine F'"),
        "ground_gf": (1 / 3, _any, "ground Lande factor"),
        "excited_gf": (0.5, _any, "excited Lande factor"),
        "leg_delta_mhz": (0.0, _any, "four-level: +/- leg detuning"),
        "n_max_v": (3, _int_ge(0), "V-mode Fock cutoff"),
        "n_max_h": (3, _int_ge(0), "H-mode Fock cutoff"),
        "k_max": (2, _int_ge(1), "simultaneous atom slots"),
        "frame": ("displaced", _choice("displaced", "lab"), "drive frame"),
        "dim_budget": (8192, _int_ge(1), "composite dimension limit"),
    },
    "beam": {
        "enabled": (True, _choice(True, False), "atomic beam (false: static atoms at g)"),
        "n_eff": (0.55, _pos, "target effective atom number"),
        "waist_um": (56.0, _pos, "cavity mode waist"),
        "wavelength_nm": (780.241, _pos, "transition wavelength"),
        "speed_m_s": (13.5, _pos, "mean atomic speed"),
        "tilt_rad": (0.017, _any, "beam deviation from perpendicular"),
        "rho0_max_w": (2.0, _pos, "impact parameter range in waists"),
        "window_w": (6.0, _pos, "transit window in w/v"),
        "queue_max": (16, _int_ge(0), "waiting arrivals kept when all slots are busy"),
        "initial": ("m0", _choice("m0", "mixture"), "atom initial state"),
    },
    "feedback": {
        "enabled": (False, _choice(True, False), "herald-triggered drive reduction"),
        "epsilon": (0.0, _unit, "drive power fraction in the window"),
        "t_fb_us": (2.5, _nonneg, "window length"),
        "latency_us": (0.0, _nonneg, "herald to window delay"),
        "retrigger": ("ignore", _choice("ignore", "extend"), "heralds inside a window"),
        "rise_time_us": (0.0, _nonneg, "EOM edge duration (0: ideal steps)"),
    },
    "detection": {
        "theta_h_deg": (0.0, _any, "HWP angle"),
        "eff_h": (1.0, _unit, "efficiency of detector port 1 (H)"),
        "eff_v": (1.0, _unit, "efficiency of detector port 2 (V)"),
        "dark_rate_per_us": (0.0, _nonneg, "dark counts per detector"),
        "dead_time_us": (0.0, _nonneg, "non-paralyzable dead time"),
        "herald": ("H", _choice("H", "V"), "herald port"),
        "target": ("H", _choice("H", "V"), "target port"),
    },
    "ensemble": {
        "trajectories": (64, _int_ge(1), "trajectories per ensemble"),
        "seed": (1, _int_ge(0), "master seed"),
        "workers": (0, _int_ge(0), "worker processes (0: QBEAT_WORKERS or 1)"),
        "duration_us": (200.0, _pos, "recorded time per trajectory"),
        "warmup_us": (15.0, _nonneg, "discarded lead-in per trajectory"),
        "rtol": (1e-6, _pos, "integrator relative tolerance"),
        "atol": (1e-8, _pos, "integrator absolute tolerance"),
    },
    "analysis": {
        "estimator": ("direct", _choice("direct", "clicks"), "g2 estimator for beat runs"),
        "bin_width_us": (0.05, _pos, "g2 bin width"),
        "max_tau_us": (10.0, _pos, "g2 range"),
        "guard_us": (0.2, _nonneg, "skip after the revival"),
        "span_us": (3.0, _pos, "post-revival fit span"),
        "epsilons": ([0.0, 0.05, 0.25, 0.5, 1.0], _floats(_unit), "scan-epsilon values"),
        "photons": ([0.05, 0.1, 0.2, 0.3, 0.4], _floats(_nonneg), "scan-photon values"),
        "deltas_mhz": ([0.1, 0.3, 0.6, 1.0, 2.0, 4.0], _floats(lambda x: x != 0), "theory grid"),
        "validate_trajectories": (500, _int_ge(1), "ensemble size for validate"),
        "validate_tmax_us": (2.0, _pos, "validate horizon"),
    },
}

PRESETS = {
    "paper-fig2": """\
# thermal beam of F=3 -> F'=4 atoms, weak homodyne admixture, drive-off feedback
system.scheme = "full"
system.g_mhz = 1.5
system.kappa_mhz = 3.0
system.gamma_mhz = 6.07
system.n_photons = 1.21
system.b_gauss = 5.0
system.n_max_v = 1
system.n_max_h = 1
system.k_max = 1
beam.enabled = true
beam.n_eff = 0.55
beam.speed_m_s = 13.5
beam.tilt_rad = 0.017
beam.rho0_max_w = 0.5
beam.window_w = 3.0
feedback.enabled = true
feedback.epsilon = 0.0
feedback.t_fb_us = 2.5
detection.theta_h_deg = 1.2
detection.eff_v = 0.0
ensemble.trajectories = 40
ensemble.duration_us = 7200.0
""",
    "four-level": """\
# reduced four-level atom at constant coupling, classical drive
system.scheme = "four-level"
system.g_mhz = 1.5
system.n_photons = 0.2
system.leg_delta_mhz = 0.607
system.n_max_v = 0
system.n_max_h = 0
system.k_max = 1
beam.enabled = false
detection.eff_v = 0.0
""",
}


class ConfigError(ValueError):
    def __init__(self, msg, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + msg)


_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def _parse_value(text):
    """JSON literal (numbers, "strings", true/false, [lists]) or a bare word."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.+-]*", text):
            return text
        raise


def _coerce(default, value):
    if isinstance(default, bool):
        return value
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, list) and isinstance(value, list):
        return [float(v) if isinstance(v, int) and not isinstance(v, bool) else v for v in value]
    return value


def _type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, float)
    if isinstance(default, str):
        return isinstance(value, str)
    return isinstance(value, list)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {s: {k: v[0] for k, v in SCHEMA[s].items()}
                                                  for s in SECTIONS})
    source: str = "<defaults>"

    def __getitem__(self, dotted):
        s, k = dotted.split(".")
        return self.values[s][k]

    def get(self, section):
        return dict(self.values[section])

    def with_(self, **updates):
        """Copy with ``section__key=value`` overrides (validated)."""
        vals = {s: dict(d) for s, d in self.values.items()}
        for name, v in updates.items():
            s, k = name.split("__", 1)
            default, check, _ = SCHEMA[s][k]
            v = _coerce(default, v)
            if not _type_ok(default, v) or not check(v):
                raise ConfigError(f"invalid value {v!r} for {s}.{k}")
            vals[s][k] = v
        return RunConfig(vals, self.source)

    def echo(self):
        """Fully resolved configuration in the input format."""
        out = []
        for s in SECTIONS:
            for k in SCHEMA[s]:
                out.append(f"{s}.{k} = {_fmt(self.values[s][k])}")
        return "\n".join(out) + "\n"

    @property
    def sha256(self):
        return hashlib.sha256(self.echo().encode()).hexdigest()


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return repr(v)


def parse_config(text, path=None):
    cfg = RunConfig(source=str(path) if path else "<string>")
    seen = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip() if '"' not in raw else _strip_comment(raw)
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", no, path)
        s, k, vtext = m.groups()
        if s not in SCHEMA:
            raise ConfigError(f"unknown section {s!r} (known: {', '.join(SECTIONS)})", no, path)
        if k not in SCHEMA[s]:
            raise ConfigError(f"unknown key {s}.{k}", no, path)
        if (s, k) in seen:
            raise ConfigError(f"duplicate key {s}.{k} (first on line {seen[s, k]})", no, path)
        seen[s, k] = no
        try:
            v = _parse_value(vtext)
        except json.JSONDecodeError as e:
            raise ConfigError(f"cannot parse value for {s}.{k}: {e}", no, path) from None
        default, check, _ = SCHEMA[s][k]
        v = _coerce(default, v)
        if not _type_ok(default, v):
            raise ConfigError(f"{s}.{k} expects {type(default).__name__}, got {v!r}", no, path)
        if not check(v):
            raise ConfigError(f"value {v!r} out of range for {s}.{k}", no, path)
        cfg.values[s][k] = v
    _cross_check(cfg, seen, path)
    return cfg


def _strip_comment(raw):
    inside = False
    for i, ch in enumerate(raw):
        if ch == '"':
            inside = not inside
        elif ch == "#" and not inside:
            return raw[:i].strip()
    return raw.strip()


def _cross_check(cfg, seen, path):
    sysv = cfg.values["system"]
    if sysv["scheme"] == "full" and abs(sysv["ground_f"] - sysv["excited_f"]) > 1:
        line = seen.get(("system", "excited_f")) or seen.get(("system", "ground_f"))
        raise ConfigError("dipole-forbidden manifold pair (|F - F'| > 1)", line, path)


def load_config(path):
    """Read a config file, or a built-in preset by name (e.g. ``paper-fig2``)."""
    p = Path(path)
    if p.is_file():
        return parse_config(p.read_text(encoding="utf-8"), str(p))
    name = str(path)
    if name.startswith("preset:"):
        name = name[len("preset:"):]
    if name in PRESETS:
        return parse_config(PRESETS[name], f"preset:{name}")
    raise ConfigError(f"no such config file or preset: {path}")


# unit conversion happens here and nowhere else
def rad_per_us(mhz):
    return 2 * pi * mhz


def build_model(cfg, n_photons=None, theta_h=None):
    from .atoms import build_level_scheme, FourLevelScheme, zeeman_shift
    from .model import SystemModel, drive_for_photons
    s = cfg.get("system")
    d = cfg.get("detection")
    beam = cfg.get("beam")
    kappa = rad_per_us(s["kappa_mhz"])
    delta_c = rad_per_us(s["delta_c_mhz"])
    n = s["n_photons"] if n_photons is None else n_photons
    if s["scheme"] == "four-level":
        split = 2 * zeeman_shift(s["ground_gf"], 1, s["b_gauss"])
        scheme = FourLevelScheme(ground_split=split, delta=rad_per_us(s["leg_delta_mhz"]))
    else:
        scheme = build_level_scheme(s["ground_f"], s["excited_f"], (s["ground_gf"], s["excited_gf"]),
                                    s["b_gauss"])
    k = s["k_max"] if beam["enabled"] else 1
    return SystemModel(scheme, rad_per_us(s["g_mhz"]), kappa, rad_per_us(s["gamma_mhz"]),
                       drive=drive_for_photons(n, kappa, delta_c), delta_a=rad_per_us(s["delta_a_mhz"]),
                       delta_c=delta_c, n_max_v=s["n_max_v"], n_max_h=s["n_max_h"],
                       theta_h=d["theta_h_deg"] if theta_h is None else theta_h,
                       eff_h=d["eff_h"], eff_v=d["eff_v"], n_slots=k, frame=s["frame"],
                       dim_budget=s["dim_budget"])


def build_geometry(cfg):
    from .beam import BeamGeometry
    b = cfg.get("beam")
    return BeamGeometry(waist=b["waist_um"], wavelength=b["wavelength_nm"] / 1000.0, v=b["speed_m_s"],
                        tilt=b["tilt_rad"], rho0_max_w=b["rho0_max_w"], window_w=b["window_w"])


def build_feedback(cfg, **over):
    from .feedback import FeedbackConfig
    f = cfg.get("feedback")
    kw = dict(enabled=f["enabled"], epsilon=f["epsilon"], t_fb=f["t_fb_us"], latency=f["latency_us"],
              retrigger=f["retrigger"], rise_time=f["rise_time_us"])
    kw.update(over)
    return FeedbackConfig(**kw)


def arrival_rate(cfg):
    """Poisson arrival rate calibrated to the configured N_eff (deterministic in the seed)."""
    from .beam import calibrate_flux
    from .rng import substream
    return calibrate_flux(cfg["beam.n_eff"], build_geometry(cfg), substream(cfg["ensemble.seed"], 0))


def resolve_seed_workers(cfg, seed=None, workers=None):
    from .ensemble import resolve_workers
    seed = cfg["ensemble.seed"] if seed is None else seed
    if workers is None and cfg["ensemble.workers"] > 0:
        workers = cfg["ensemble.workers"]
    return seed, resolve_workers(workers)
