"""Minimal deterministic SVG charts (no timestamps, fixed number formatting)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _n(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class LinePlot:
    title: str
    xlabel: str = ""
    ylabel: str = ""
    width: int = 800
    height: int = 360
    margin: int = 50
    series: list[tuple[str, np.ndarray, np.ndarray, str]] = field(default_factory=list)
    markers: list[tuple[str, np.ndarray, np.ndarray, str]] = field(default_factory=list)
    vlines: list[tuple[float, str]] = field(default_factory=list)
    hsegments: list[tuple[float, float, float, str]] = field(default_factory=list)

    def line(self, label: str, x: Sequence[float], y: Sequence[float], color: Optional[str] = None) -> "LinePlot":
        color = color or PALETTE[len(self.series) % len(PALETTE)]
        self.series.append((label, np.asarray(x, float), np.asarray(y, float), color))
        return self

    def points(self, label: str, x: Sequence[float], y: Sequence[float], color: str = "#d62728") -> "LinePlot":
        self.markers.append((label, np.asarray(x, float), np.asarray(y, float), color))
        return self

    def vline(self, x: float, color: str = "#555555") -> "LinePlot":
        self.vlines.append((float(x), color))
        return self

    def hsegment(self, x0: float, x1: float, y: float, color: str = "#2ca02c") -> "LinePlot":
        self.hsegments.append((float(x0), float(x1), float(y), color))
        return self

    def _bounds(self) -> tuple[float, float, float, float]:
        xs = [s[1] for s in self.series + self.markers if s[1].size]
        ys = [s[2] for s in self.series + self.markers if s[2].size]
        ys += [np.array([h[2]]) for h in self.hsegments]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = min(a.min() for a in xs), max(a.max() for a in xs)
        y0, y1 = min(a.min() for a in ys), max(a.max() for a in ys)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return float(x0), float(x1), float(y0 - pad), float(y1 + pad)

    def render(self) -> str:
        w, h, m = self.width, self.height, self.margin
        x0, x1, y0, y1 = self._bounds()

        def px(x):
            return m + (np.asarray(x) - x0) / (x1 - x0) * (w - 2 * m)

        def py(y):
            return h - m - (np.asarray(y) - y0) / (y1 - y0) * (h - 2 * m)

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f'<rect width="{w}" height="{h}" fill="white"/>',
            f'<text x="{w / 2:.0f}" y="20" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
            f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>',
            f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>',
        ]
        for k in range(5):
            yv = y0 + (y1 - y0) * k / 4
            out.append(f'<text x="{m - 4}" y="{_n(float(py(yv)))}" text-anchor="end" font-size="10">{yv:.3g}</text>')
            xv = x0 + (x1 - x0) * k / 4
            out.append(f'<text x="{_n(float(px(xv)))}" y="{h - m + 14}" text-anchor="middle" font-size="10">{xv:.4g}</text>')
        if self.xlabel:
            out.append(f'<text x="{w / 2:.0f}" y="{h - 8}" text-anchor="middle" font-size="12">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(
                f'<text x="14" y="{h / 2:.0f}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {h / 2:.0f})">{escape(self.ylabel)}</text>'
            )
        for x, color in self.vlines:
            X = _n(float(px(x)))
            out.append(f'<line x1="{X}" y1="{m}" x2="{X}" y2="{h - m}" stroke="{color}" stroke-dasharray="4 3"/>')
        for label, x, y, color in self.series:
            pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in zip(px(x), py(y)))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"><title>{escape(label)}</title></polyline>')
        for xa, xb, y, color in self.hsegments:
            out.append(
                f'<line x1="{_n(float(px(xa)))}" y1="{_n(float(py(y)))}" x2="{_n(float(px(xb)))}" y2="{_n(float(py(y)))}" stroke="{color}" stroke-width="2"/>'
            )
        for label, x, y, color in self.markers:
            for a, b in zip(px(x), py(y)):
                out.append(f'<circle cx="{_n(a)}" cy="{_n(b)}" r="3" fill="{color}"/>')
        legend = [(s[0], s[3]) for s in self.series + self.markers]
        for k, (label, color) in enumerate(legend):
            ly = m + 14 * k
            out.append(f'<rect x="{w - m - 150}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{w - m - 135}" y="{ly + 1}" font-size="11">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def heat_table(title: str, row_labels: Sequence[str], col_labels: Sequence[str], values: np.ndarray) -> str:
    """Coloured table of values in [-1, 1]; NaN cells are grey."""
    cell_w, cell_h, left, top = 90, 28, 150, 50
    w = left + cell_w * len(col_labels) + 20
    h = top + cell_h * len(row_labels) + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2:.0f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for j, c in enumerate(col_labels):
        out.append(f'<text x="{left + cell_w * j + cell_w / 2:.0f}" y="{top - 6}" text-anchor="middle" font-size="12">{escape(c)}</text>')
    for i, r in enumerate(row_labels):
        y = top + cell_h * i
        out.append(f'<text x="{left - 6}" y="{y + 18}" text-anchor="end" font-size="12">{escape(r)}</text>')
        for j in range(len(col_labels)):
            v = float(values[i, j])
            if math.isnan(v):
                fill, text = "#cccccc", "n/a"
            else:
                t = max(-1.0, min(1.0, v))
                # blue for negative, red for positive
                red = int(255 - (0 if t > 0 else 200 * -t))
                blue = int(255 - (200 * t if t > 0 else 0))
                green = int(255 - 200 * abs(t))
                fill, text = f"#{red:02x}{green:02x}{blue:02x}", f"{v:.3f}"
            x = left + cell_w * j
            out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{fill}" stroke="white"/>')
            out.append(f'<text x="{x + cell_w / 2:.0f}" y="{y + 18}" text-anchor="middle" font-size="12">{text}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
