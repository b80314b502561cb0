"""Minimal dependency-free SVG line plots and heat maps.

Figures keep the plotted data, and :meth:`data_digest` hashes it so tests
can pin what a figure shows without depending on SVG formatting.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _digest(parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, str):
            h.update(p.encode())
        else:
            h.update(np.ascontiguousarray(np.asarray(p, dtype=np.float64)).tobytes())
    return h.hexdigest()


@dataclass
class LinePlot:
    title: str
    xlabel: str
    ylabel: str
    series: list = field(default_factory=list)
    markers: bool = False

    def add(self, name: str, x, y) -> "LinePlot":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError("x and y differ in shape")
        self.series.append((str(name), x, y))
        return self

    def data_digest(self) -> str:
        parts = [self.title]
        for name, x, y in self.series:
            parts += [name, x, y]
        return _digest(parts)

    def _limits(self):
        xs = np.concatenate([s[1] for s in self.series]) if self.series else np.zeros(0)
        ys = np.concatenate([s[2] for s in self.series]) if self.series else np.zeros(0)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if not ok.any():
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = float(xs[ok].min()), float(xs[ok].max())
        y0, y1 = float(ys[ok].min()), float(ys[ok].max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            pad = abs(y0) * 0.1 or 0.5
            y0, y1 = y0 - pad, y1 + pad
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def to_svg(self) -> str:
        x0, x1, y0, y1 = self._limits()
        pw = WIDTH - MARGIN_L - MARGIN_R
        ph = HEIGHT - MARGIN_T - MARGIN_B

        def px(v):
            return MARGIN_L + (v - x0) / (x1 - x0) * pw

        def py(v):
            return MARGIN_T + (1.0 - (v - y0) / (y1 - y0)) * ph

        out = [_header(self.title)]
        out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
        for t in nice_ticks(x0, x1):
            X = px(t)
            out.append(f'<line x1="{X:.1f}" y1="{MARGIN_T + ph}" x2="{X:.1f}" y2="{MARGIN_T + ph + 5}" stroke="#444"/>')
            out.append(f'<text x="{X:.1f}" y="{MARGIN_T + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
        for t in nice_ticks(y0, y1):
            Y = py(t)
            out.append(f'<line x1="{MARGIN_L - 5}" y1="{Y:.1f}" x2="{MARGIN_L + pw}" y2="{Y:.1f}" stroke="#ddd"/>')
            out.append(f'<text x="{MARGIN_L - 8}" y="{Y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="16" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.1f})">{escape(self.ylabel)}</text>'
        )
        for k, (name, x, y) in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            ok = np.isfinite(x) & np.isfinite(y)
            pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[ok], y[ok]))
            if pts:
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
                if self.markers:
                    out += [f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="3" fill="{color}"/>' for a, b in zip(x[ok], y[ok])]
            ly = MARGIN_T + 14 + 18 * k
            lx = WIDTH - MARGIN_R + 12
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 26}" y="{ly}">{escape(name)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_svg())
        return path


@dataclass
class Heatmap:
    title: str
    grid: np.ndarray
    row_labels: list
    col_labels: list

    def data_digest(self) -> str:
        return _digest([self.title, self.grid, *map(str, self.row_labels), *map(str, self.col_labels)])

    def to_svg(self) -> str:
        g = np.asarray(self.grid, dtype=float)
        nr, nc = g.shape
        cell = min(48, (WIDTH - 120) // max(nc, 1))
        top = MARGIN_T + 10
        hi = float(np.nanmax(g)) if np.isfinite(g).any() and np.nanmax(g) > 0 else 1.0
        out = [_header(self.title, 120 + cell * nc + 20, top + cell * nr + 40)]
        for r in range(nr):
            out.append(f'<text x="110" y="{top + cell * r + cell / 2 + 4:.1f}" text-anchor="end">{escape(str(self.row_labels[r]))}</text>')
            for c in range(nc):
                v = g[r, c]
                shade = 0.0 if not np.isfinite(v) else max(0.0, min(1.0, v / hi))
                level = int(round(255 * (1.0 - shade)))
                out.append(
                    f'<rect x="{120 + cell * c}" y="{top + cell * r}" width="{cell}" height="{cell}" '
                    f'fill="rgb({level},{level},255)" stroke="#fff"><title>{_fmt(v)}</title></rect>'
                )
        for c in range(nc):
            out.append(f'<text x="{120 + cell * c + cell / 2:.1f}" y="{top + cell * nr + 16}" text-anchor="middle">{escape(str(self.col_labels[c]))}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_svg())
        return path


def _header(title: str, w: int = WIDTH, h: int = HEIGHT) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'font-family="sans-serif" font-size="12">\n'
        f'<rect width="{w}" height="{h}" fill="white"/>\n'
        f'<text x="{w / 2:.0f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>'
    )
