"""Dependency-free SVG line plots for time series."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_plot_svg", "write_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + 0.5 * step, step)


def line_plot_svg(series: dict[str, tuple], title: str = "", xlabel: str = "", ylabel: str = "",
                  width: int = 560, height: int = 360) -> str:
    """Render named (x, y) series as polylines with axes, ticks and a legend."""
    pad_l, pad_r, pad_t, pad_b = 64, 130, 32, 48
    xs = [np.asarray(x, float) for x, _ in series.values()]
    ys = [np.asarray(y, float) for _, y in series.values()]
    finite = [v[np.isfinite(v)] for v in ys]
    allx = np.concatenate(xs) if xs else np.zeros(1)
    ally = np.concatenate(finite) if finite and any(len(v) for v in finite) else np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    margin = 0.05 * (y1 - y0)
    y0, y1 = y0 - margin, y1 + margin
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        if x0 - 1e-12 <= t <= x1 + 1e-12:
            out.append(f'<line x1="{sx(t):.1f}" y1="{pad_t + ph}" x2="{sx(t):.1f}" y2="{pad_t + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{sx(t):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        if y0 <= t <= y1:
            out.append(f'<line x1="{pad_l - 4}" y1="{sy(t):.1f}" x2="{pad_l}" y2="{sy(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{pad_l - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    if y0 < 0 < y1:
        out.append(f'<line x1="{pad_l}" y1="{sy(0):.1f}" x2="{pad_l + pw}" y2="{sy(0):.1f}" '
                   f'stroke="#bbbbbb" stroke-dasharray="3,3"/>')
    for k, (name, (x, y)) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(np.asarray(x, float), np.asarray(y, float))
                       if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{pts}"/>')
        ly = pad_t + 14 + 16 * k
        out.append(f'<line x1="{pad_l + pw + 10}" y1="{ly - 4}" x2="{pad_l + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + pw + 32}" y="{ly}">{escape(name)}</text>')
    if title:
        out.append(f'<text x="{pad_l + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, series: dict[str, tuple], **kw) -> None:
    with open(path, "w") as fh:
        fh.write(line_plot_svg(series, **kw))
