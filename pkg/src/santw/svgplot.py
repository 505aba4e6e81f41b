"""Minimal SVG line plots: axes, ticks, legend and overlaid series."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "line_plot"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_DASH = ("", "6,3", "2,2")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    style: int = 0


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(n, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    return [first + k * step for k in range(int((hi - first) / step + 1e-9) + 1)]


def _decimate(x, y, limit):
    if len(x) <= limit:
        return x, y
    idx = np.unique(np.linspace(0, len(x) - 1, limit).astype(int))
    return x[idx], y[idx]


def line_plot(path, series: list[Series], title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 720, height: int = 420, max_points: int = 2000) -> str:
    """Write an SVG with all series on shared axes and return its text.

    ``style`` selects the dash pattern so that groups of series (nominal,
    compensated, reference) stay distinguishable; colors cycle per series
    within a group.
    """
    left, right, top, bottom = 70, 180, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = [np.asarray(s.x, float) for s in series]
    ys = [np.asarray(s.y, float) for s in series]
    finite = [v[np.isfinite(v)] for v in ys]
    xlo = min((float(x.min()) for x in xs if x.size), default=0.0)
    xhi = max((float(x.max()) for x in xs if x.size), default=1.0)
    ylo = min((float(v.min()) for v in finite if v.size), default=0.0)
    yhi = max((float(v.max()) for v in finite if v.size), default=1.0)
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi - ylo < 1e-12 * max(1.0, abs(yhi)):
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    sx = lambda v: left + (v - xlo) / (xhi - xlo) * pw
    sy = lambda v: top + (yhi - v) / (yhi - ylo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(xlo, xhi):
        X = sx(v)
        out.append(f'<line x1="{X:.1f}" y1="{top + ph}" x2="{X:.1f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{X:.1f}" y="{top + ph + 16}" text-anchor="middle">{v:g}</text>')
    for v in _ticks(ylo, yhi):
        Y = sy(v)
        out.append(f'<line x1="{left - 4}" y1="{Y:.1f}" x2="{left}" y2="{Y:.1f}" stroke="black"/>')
        out.append(f'<line x1="{left}" y1="{Y:.1f}" x2="{left + pw}" y2="{Y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.1f}" text-anchor="end">{v:.4g}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="{top - 14}" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    counts: dict[int, int] = {}
    for k, (s, x, y) in enumerate(zip(series, xs, ys)):
        j = counts.get(s.style, 0)
        counts[s.style] = j + 1
        color = _COLORS[(j + 2 * s.style) % len(_COLORS)]
        dash = _DASH[s.style % len(_DASH)]
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        x, y = _decimate(x, y, max_points)
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash_attr} points="{pts}"/>')
        ly = top + 10 + 16 * k
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(s.label)}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
