"""Minimal deterministic SVG figures in world coordinates."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .field import ScalarField2D

PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)

_MAX_CELLS = 160


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class Figure:
    """A world-coordinate canvas; ``y`` points up as in the data."""

    def __init__(self, x_min, x_max, y_min, y_max, width: int = 640, title: str = ""):
        self.x_min, self.x_max = float(x_min), float(x_max)
        self.y_min, self.y_max = float(y_min), float(y_max)
        self.pad = 40
        self.width = int(width)
        span_x = self.x_max - self.x_min
        span_y = self.y_max - self.y_min
        self.scale = (self.width - 2 * self.pad) / span_x
        self.height = int(round(span_y * self.scale)) + 2 * self.pad
        self.title = title
        self.items: list[str] = []
        self.legend: list[tuple[str, str]] = []

    @classmethod
    def for_field(cls, field: ScalarField2D, **kw) -> "Figure":
        s = field.spec
        return cls(s.x_min, s.x_max, s.y_min, s.y_max, **kw)

    def px(self, x, y):
        X = self.pad + (np.asarray(x, dtype=np.float64) - self.x_min) * self.scale
        Y = self.height - self.pad - (np.asarray(y, dtype=np.float64) - self.y_min) * self.scale
        return X, Y

    def heatmap(self, field: ScalarField2D, log: bool = False, invert: bool = False):
        """Grey-scale cells (darker = larger unless ``invert``), downsampled if large."""
        s = field.spec
        vals = np.log(field.values) if log else field.values
        step = max(1, int(np.ceil(max(s.nx, s.ny) / _MAX_CELLS)))
        sub = vals[::step, ::step]
        lo, hi = float(sub.min()), float(sub.max())
        norm = np.zeros_like(sub) if hi == lo else (sub - lo) / (hi - lo)
        if invert:
            norm = 1.0 - norm
        cell = s.h * step
        w = cell * self.scale
        for i in range(sub.shape[0]):
            for j in range(sub.shape[1]):
                g = int(round(235 - 190 * norm[i, j]))
                X, Y = self.px(s.x_min + i * s.h * step - 0.5 * cell, s.y_min + j * s.h * step + 0.5 * cell)
                self.items.append(
                    f'<rect x="{_fmt(X)}" y="{_fmt(Y)}" width="{_fmt(w)}" height="{_fmt(w)}" '
                    f'fill="rgb({g},{g},{g})" stroke="none"/>'
                )

    def polyline(self, points, color: str, label: str | None = None, width: float = 1.5, dash: str | None = None):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        X, Y = self.px(pts[:, 0], pts[:, 1])
        coords = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(X, Y))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'
        )
        if label:
            self._add_legend(label, color)

    def scatter(self, points, color: str, radius: float = 1.2, label: str | None = None):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        X, Y = self.px(pts[:, 0], pts[:, 1])
        for a, b in zip(X, Y):
            self.items.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{radius}" fill="{color}"/>')
        if label:
            self._add_legend(label, color)

    def marker(self, p, text: str, color: str = "#000000"):
        X, Y = self.px(p[0], p[1])
        self.items.append(f'<circle cx="{_fmt(X)}" cy="{_fmt(Y)}" r="3" fill="{color}"/>')
        self.items.append(
            f'<text x="{_fmt(X + 5)}" y="{_fmt(Y - 5)}" font-size="11" fill="{color}">{escape(text)}</text>'
        )

    def _add_legend(self, label: str, color: str):
        if (label, color) not in self.legend:
            self.legend.append((label, color))

    def to_string(self) -> str:
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}">',
            f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>',
        ]
        out.extend(self.items)
        X0, Y0 = self.px(self.x_min, self.y_max)
        X1, Y1 = self.px(self.x_max, self.y_min)
        out.append(
            f'<rect x="{_fmt(X0)}" y="{_fmt(Y0)}" width="{_fmt(X1 - X0)}" height="{_fmt(Y1 - Y0)}" '
            'fill="none" stroke="#000000" stroke-width="1"/>'
        )
        if self.title:
            out.append(f'<text x="{self.pad}" y="{self.pad - 14}" font-size="13">{escape(self.title)}</text>')
        for k, (label, color) in enumerate(self.legend):
            y = self.pad + 14 + 16 * k
            x = self.width - self.pad - 150
            out.append(f'<rect x="{x}" y="{y - 9}" width="18" height="4" fill="{color}"/>')
            out.append(f'<text x="{x + 24}" y="{y}" font-size="11">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_string())
        return path
