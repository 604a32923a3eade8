"""Minimal deterministic SVG charts.

Coordinates are rendered with a fixed number of decimals so identical input
always yields identical bytes.
"""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 440
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _f(v):
    return f"{v:.2f}"


class _Axes:
    def __init__(self, xlim, ylim, logx, logy):
        self.logx, self.logy = logx, logy
        self.x0, self.x1 = (self._t(v, logx) for v in xlim)
        self.y0, self.y1 = (self._t(v, logy) for v in ylim)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    @staticmethod
    def _t(v, log):
        return math.log10(v) if log else v

    def px(self, x):
        left, right = MARGIN[0], WIDTH - MARGIN[1]
        return left + (self._t(x, self.logx) - self.x0) / (self.x1 - self.x0) * (right - left)

    def py(self, y):
        top, bottom = MARGIN[2], HEIGHT - MARGIN[3]
        return bottom - (self._t(y, self.logy) - self.y0) / (self.y1 - self.y0) * (bottom - top)


def _ticks(lo, hi, log):
    if log:
        return [10.0 ** e for e in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1)
                if lo <= 10.0 ** e <= hi] or [lo, hi]
    step = 10 ** math.floor(math.log10((hi - lo) or 1.0))
    if (hi - lo) / step < 4:
        step /= 2
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def _frame(ax, xlim, ylim, title, xlabel, ylabel):
    left, right = MARGIN[0], WIDTH - MARGIN[1]
    top, bottom = MARGIN[2], HEIGHT - MARGIN[3]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
        'fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{(left + right) / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for t in _ticks(*xlim, ax.logx):
        x = _f(ax.px(t))
        parts.append(f'<line x1="{x}" y1="{bottom}" x2="{x}" y2="{bottom + 5}" stroke="black"/>')
        parts.append(f'<text x="{x}" y="{bottom + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(*ylim, ax.logy):
        y = _f(ax.py(t))
        parts.append(f'<line x1="{left - 5}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{y}" text-anchor="end" dominant-baseline="middle">{t:g}</text>')
    return parts


def _legend(parts, labels):
    for i, (label, color) in enumerate(labels):
        y = MARGIN[2] + 14 + 16 * i
        x = MARGIN[0] + 10
        parts.append(f'<rect x="{x}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
        parts.append(f'<text x="{x + 16}" y="{y + 1}">{escape(label)}</text>')


def scatter_plot(points, lines=(), title="", xlabel="", ylabel="", logx=True, logy=True):
    """Scatter groups plus polylines.

    ``points``: sequence of ``(label, xs, ys)``; ``lines``: sequence of
    ``(label, xs, ys)`` drawn as dashed polylines.
    """
    def plottable(x, y):
        return (math.isfinite(x) and math.isfinite(y)
                and (x > 0 or not logx) and (y > 0 or not logy))

    ok = [(x, y) for _, px, py in list(points) + list(lines)
          for x, y in zip(px, py) if plottable(x, y)]
    if not ok:
        raise ValueError("nothing to plot")
    xlim = (min(x for x, _ in ok), max(x for x, _ in ok))
    ylim = (min(y for _, y in ok), max(y for _, y in ok))
    if logx:
        xlim = (xlim[0] / 1.15, xlim[1] * 1.15)
    if logy:
        ylim = (ylim[0] / 1.3, ylim[1] * 1.3)
    else:
        pad = 0.05 * ((ylim[1] - ylim[0]) or 1.0)
        ylim = (ylim[0] - pad, ylim[1] + pad)
    ax = _Axes(xlim, ylim, logx, logy)
    parts = _frame(ax, xlim, ylim, title, xlabel, ylabel)
    legend = []
    for i, (label, px, py) in enumerate(points):
        color = PALETTE[i % len(PALETTE)]
        legend.append((label, color))
        for x, y in zip(px, py):
            if plottable(x, y):
                parts.append(f'<circle cx="{_f(ax.px(x))}" cy="{_f(ax.py(y))}" r="2.5" '
                             f'fill="{color}" fill-opacity="0.6"/>')
    for i, (label, px, py) in enumerate(lines):
        color = PALETTE[(len(points) + i) % len(PALETTE)]
        legend.append((label, color))
        coords = " ".join(f"{_f(ax.px(x))},{_f(ax.py(y))}" for x, y in zip(px, py))
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     'stroke-width="1.5" stroke-dasharray="6 3"/>')
    _legend(parts, legend)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_plot(histograms, title="", xlabel="", ylabel="count"):
    """Overlaid step histograms; ``histograms`` is a sequence of ``(label, counts, edges)``."""
    lo = min(float(e[0]) for _, _, e in histograms)
    hi = max(float(e[-1]) for _, _, e in histograms)
    top = max(float(max(c)) for _, c, _ in histograms)
    ax = _Axes((lo, hi), (0.0, top * 1.05), False, False)
    parts = _frame(ax, (lo, hi), (0.0, top * 1.05), title, xlabel, ylabel)
    legend = []
    for i, (label, counts, edges) in enumerate(histograms):
        color = PALETTE[i % len(PALETTE)]
        legend.append((label, color))
        pts = [(edges[0], 0.0)]
        for c, a, b in zip(counts, edges[:-1], edges[1:]):
            pts += [(a, float(c)), (b, float(c))]
        pts.append((edges[-1], 0.0))
        coords = " ".join(f"{_f(ax.px(x))},{_f(ax.py(y))}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="{color}" fill-opacity="0.25" '
                     f'stroke="{color}" stroke-width="1.2"/>')
    _legend(parts, legend)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
