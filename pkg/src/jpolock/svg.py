"""Tiny self-contained SVG line-plot renderer (axes, log scaling, legend)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str | None = None
    dashed: bool = False


@dataclass
class Plot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlog: bool = False
    ylog: bool = False
    width: int = 640
    height: int = 420
    series: list = field(default_factory=list)

    def add(self, x, y, label="", **kw) -> "Plot":
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, **kw))
        return self

    def _transform(self, v, log):
        if log:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), np.nan)
        return v

    def render(self) -> str:
        left, right, top, bottom = 70, 20, 30, 50
        pw, ph = self.width - left - right, self.height - top - bottom
        xs = [self._transform(s.x, self.xlog) for s in self.series]
        ys = [self._transform(s.y, self.ylog) for s in self.series]
        finite_x = np.concatenate([v[np.isfinite(v)] for v in xs] or [np.zeros(1)])
        finite_y = np.concatenate([v[np.isfinite(v)] for v in ys] or [np.zeros(1)])
        x0, x1 = _span(finite_x)
        y0, y1 = _span(finite_y)

        def px(v):
            return left + (v - x0) / (x1 - x0) * pw

        def py(v):
            return top + ph - (v - y0) / (y1 - y0) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" font-family="sans-serif" font-size="11">',
               f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
               f'<text x="{left + pw / 2}" y="18" text-anchor="middle">{escape(self.title)}</text>',
               f'<text x="{left + pw / 2}" y="{self.height - 10}" text-anchor="middle">'
               f'{escape(self.xlabel)}</text>',
               f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2})">{escape(self.ylabel)}</text>']
        for v in _ticks(x0, x1):
            out.append(f'<line x1="{px(v):.2f}" y1="{top + ph}" x2="{px(v):.2f}" '
                       f'y2="{top + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{px(v):.2f}" y="{top + ph + 16}" text-anchor="middle">'
                       f'{_label(v, self.xlog)}</text>')
        for v in _ticks(y0, y1):
            out.append(f'<line x1="{left - 4}" y1="{py(v):.2f}" x2="{left}" y2="{py(v):.2f}" '
                       'stroke="black"/>')
            out.append(f'<text x="{left - 6}" y="{py(v) + 4:.2f}" text-anchor="end">'
                       f'{_label(v, self.ylog)}</text>')
        for k, (s, vx, vy) in enumerate(zip(self.series, xs, ys)):
            color = s.color or PALETTE[k % len(PALETTE)]
            ok = np.isfinite(vx) & np.isfinite(vy)
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(vx[ok], vy[ok]))
            dash = ' stroke-dasharray="4 3"' if s.dashed else ""
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} '
                       f'points="{pts}"/>')
            if s.label:
                ly = top + 14 + 14 * k
                out.append(f'<line x1="{left + pw - 120}" y1="{ly - 4}" x2="{left + pw - 100}" '
                           f'y2="{ly - 4}" stroke="{color}"{dash}/>')
                out.append(f'<text x="{left + pw - 96}" y="{ly}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())


def _span(v):
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.03 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo, hi, target=6):
    step = 10.0 ** math.floor(math.log10((hi - lo) / target))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= target:
            step *= m
            break
    first = math.ceil(lo / step) * step
    return [first + k * step for k in range(int((hi - first) / step) + 1)]


def _label(v, log):
    return f"1e{v:g}" if log else f"{v:.3g}"
