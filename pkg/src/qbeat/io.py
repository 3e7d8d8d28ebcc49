"""CSV output with a provenance header (config hash, seed, version, resolved config)."""
from pathlib import Path

import numpy as np

from . import __version__


def header_lines(cfg, seed, extra=None):
    lines = [f"# config_sha256 = {cfg.sha256}", f"# seed = {seed}", f"# version = {__version__}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    lines += ["# " + ln for ln in cfg.echo().splitlines()]
    return lines


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if not np.isfinite(x):
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return f"{x:.10g}"


def write_csv(path, columns, rows, cfg, seed, extra=None):
    """Write ``rows`` under ``columns`` with LF endings and UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = header_lines(cfg, seed, extra)
    out.append(",".join(columns))
    for r in rows:
        out.append(",".join(fmt(x) for x in r))
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    return path


def write_clicks(path, record, cfg, seed):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = header_lines(cfg, seed)
    out.append("timestamp_us,channel,trajectory_id")
    out.extend(record.to_csv_rows())
    path.write_text("\n".join(out) + "\n", encoding="utf-8", newline="\n")
    return path


def read_csv(path):
    """(header dict, column names, float array) of a file written by :func:`write_csv`."""
    meta = {}
    cols = None
    data = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            if " = " in line:
                k, v = line[1:].split(" = ", 1)
                meta.setdefault(k.strip(), v.strip())
            continue
        if cols is None:
            cols = line.split(",")
            continue
        data.append([_num(x) for x in line.split(",")])
    return meta, cols, np.array(data, float) if data else np.zeros((0, len(cols or [])))


def _num(x):
    if x in ("true", "false"):
        return 1.0 if x == "true" else 0.0
    try:
        return float(x)
    except ValueError:
        return np.nan
