"""Minimal self-contained SVG line and point plots."""
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
ML, MR, MT, MB = 70, 20, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** np.floor(np.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= n:
            step *= m
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step * 1e-9, step)


class Figure:
    def __init__(self, title="", xlabel="", ylabel=""):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.series = []

    def line(self, x, y, label="", color=None):
        self.series.append(("line", np.asarray(x, float), np.asarray(y, float), None, label, color))
        return self

    def points(self, x, y, yerr=None, label="", color=None):
        e = None if yerr is None else np.asarray(yerr, float)
        self.series.append(("points", np.asarray(x, float), np.asarray(y, float), e, label, color))
        return self

    def _limits(self):
        xs = np.concatenate([s[1] for s in self.series]) if self.series else np.array([0.0, 1.0])
        ys = [s[2] if s[3] is None else np.r_[s[2] - s[3], s[2] + s[3]] for s in self.series]
        ys = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
        if not len(xs):
            xs = np.array([0.0, 1.0])
        if not len(ys):
            ys = np.array([0.0, 1.0])
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        pad = 0.05 * (y1 - y0 or 1.0)
        return x0, (x1 if x1 > x0 else x0 + 1), y0 - pad, y1 + pad

    def render(self):
        x0, x1, y0, y1 = self._limits()
        pw, ph = W - ML - MR, H - MT - MB

        def X(x):
            return ML + (x - x0) / (x1 - x0) * pw

        def Y(y):
            return MT + ph - (y - y0) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
               f'<rect width="{W}" height="{H}" fill="white"/>',
               f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
        for t in _ticks(x0, x1):
            out.append(f'<line x1="{X(t):.2f}" y1="{MT + ph}" x2="{X(t):.2f}" y2="{MT + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{X(t):.2f}" y="{MT + ph + 18}" text-anchor="middle">{t:.4g}</text>')
        for t in _ticks(y0, y1):
            out.append(f'<line x1="{ML - 5}" y1="{Y(t):.2f}" x2="{ML}" y2="{Y(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{ML - 8}" y="{Y(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
        out.append(f'<text x="{ML + pw / 2}" y="{H - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{MT + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 15 {MT + ph / 2})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{W / 2}" y="18" text-anchor="middle">{escape(self.title)}</text>')
        for k, (kind, x, y, e, label, color) in enumerate(self.series):
            col = color or COLORS[k % len(COLORS)]
            ok = np.isfinite(x) & np.isfinite(y)
            if kind == "line":
                pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x[ok], y[ok]))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.2"/>')
            else:
                for j in np.flatnonzero(ok):
                    if e is not None and np.isfinite(e[j]):
                        out.append(f'<line x1="{X(x[j]):.2f}" y1="{Y(y[j] - e[j]):.2f}" x2="{X(x[j]):.2f}" '
                                   f'y2="{Y(y[j] + e[j]):.2f}" stroke="{col}"/>')
                    out.append(f'<circle cx="{X(x[j]):.2f}" cy="{Y(y[j]):.2f}" r="3" fill="{col}"/>')
            if label:
                ly = MT + 15 + 16 * k
                out.append(f'<rect x="{ML + pw - 150}" y="{ly - 9}" width="10" height="10" fill="{col}"/>')
                out.append(f'<text x="{ML + pw - 135}" y="{ly}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(), encoding="utf-8", newline="\n")
        return path
