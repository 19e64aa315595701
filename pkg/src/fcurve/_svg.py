"""Tiny deterministic SVG line-plot writer.

No timestamps, no randomness, fixed float formatting: rendering the
same data twice yields byte-identical files.  Only the handful of plot
shapes the reports need is supported.
"""

from __future__ import annotations

import math

from .errors import ConfigError

PALETTE = (
    "#1f6fb4", "#d95f02", "#1b9e77", "#d01c8b", "#7570b3",
    "#66a61e", "#e6ab02", "#a6761d", "#e41a1c", "#666666",
)

WIDTH = 760
HEIGHT = 500
MARGIN = {"left": 62, "right": 24, "top": 40, "bottom": 46}


def _fmt(value):
    """Fixed two-decimal coordinate formatting."""
    return f"{value:.2f}"


def _escape(text):
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _nice_ticks(lo, hi, target=6):
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = 0.0, 1.0
    if lo == hi:
        lo -= 1.0
        hi += 1.0
    span = hi - lo
    raw = span / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    value = first
    while value <= hi + step * 1e-9:
        ticks.append(0.0 if abs(value) < step * 1e-9 else value)
        value += step
    return ticks


def _tick_label(value):
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return f"{value:.4g}"


class LinePlot:
    """Collects series, then renders one self-contained SVG."""

    def __init__(self, title="", xlabel="", ylabel=""):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.series = []
        self.points = []
        self.labels = []

    def add_series(self, xs, ys, label=None, color=None, dash=None, width=1.6):
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if len(xs) != len(ys):
            raise ConfigError("series coordinates must have equal length")
        if color is None:
            color = PALETTE[len(self.series) % len(PALETTE)]
        self.series.append((xs, ys, label, color, dash, width))

    def add_points(self, xs, ys, color, radius=2.6):
        xs = [float(v) for v in xs]
        ys = [float(v) for v in ys]
        if len(xs) != len(ys):
            raise ConfigError("point coordinates must have equal length")
        self.points.append((xs, ys, color, radius))

    def add_label(self, x, y, text, color="#333333", dx=4.0, dy=-4.0, size=10):
        self.labels.append((float(x), float(y), str(text), color, dx, dy, size))

    def _bounds(self):
        xs = [v for s in self.series for v in s[0]]
        xs += [v for pts in self.points for v in pts[0]]
        xs += [l[0] for l in self.labels]
        ys = [v for s in self.series for v in s[1]]
        ys += [v for pts in self.points for v in pts[1]]
        ys += [l[1] for l in self.labels]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        if x_lo == x_hi:
            x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
        if y_lo == y_hi:
            y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
        pad_y = 0.05 * (y_hi - y_lo)
        return x_lo, x_hi, y_lo - pad_y, y_hi + pad_y

    def render(self, path, run_hash=None):
        """Write the SVG file; `run_hash` lands in a <desc> element."""
        x_lo, x_hi, y_lo, y_hi = self._bounds()
        inner_w = WIDTH - MARGIN["left"] - MARGIN["right"]
        inner_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

        def sx(v):
            return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * inner_w

        def sy(v):
            return MARGIN["top"] + (y_hi - v) / (y_hi - y_lo) * inner_h

        out = []
        out.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
        if run_hash:
            out.append(f"  <desc>run: {_escape(run_hash)}</desc>")
        out.append(f'  <rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>')

        # axes + grid
        x0, y0 = MARGIN["left"], MARGIN["top"]
        x1, y1 = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
        for tick in _nice_ticks(x_lo, x_hi):
            if not x_lo <= tick <= x_hi:
                continue
            px = _fmt(sx(tick))
            out.append(f'  <line x1="{px}" y1="{y0}" x2="{px}" y2="{y1}" '
                       f'stroke="#dddddd" stroke-width="1"/>')
            out.append(f'  <text x="{px}" y="{y1 + 16}" font-size="10" '
                       f'text-anchor="middle" fill="#333333" '
                       f'font-family="sans-serif">{_tick_label(tick)}</text>')
        for tick in _nice_ticks(y_lo, y_hi):
            if not y_lo <= tick <= y_hi:
                continue
            py = _fmt(sy(tick))
            out.append(f'  <line x1="{x0}" y1="{py}" x2="{x1}" y2="{py}" '
                       f'stroke="#dddddd" stroke-width="1"/>')
            out.append(f'  <text x="{x0 - 6}" y="{py}" font-size="10" '
                       f'text-anchor="end" dominant-baseline="middle" '
                       f'fill="#333333" font-family="sans-serif">'
                       f'{_tick_label(tick)}</text>')
        out.append(f'  <rect x="{x0}" y="{y0}" width="{x1 - x0}" '
                   f'height="{y1 - y0}" fill="none" stroke="#333333" '
                   f'stroke-width="1"/>')

        if self.title:
            out.append(f'  <text x="{WIDTH // 2}" y="24" font-size="14" '
                       f'text-anchor="middle" fill="#111111" '
                       f'font-family="sans-serif">{_escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'  <text x="{(x0 + x1) // 2}" y="{HEIGHT - 10}" '
                       f'font-size="11" text-anchor="middle" fill="#333333" '
                       f'font-family="sans-serif">{_escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'  <text x="16" y="{(y0 + y1) // 2}" font-size="11" '
                       f'text-anchor="middle" fill="#333333" '
                       f'font-family="sans-serif" '
                       f'transform="rotate(-90 16 {(y0 + y1) // 2})">'
                       f'{_escape(self.ylabel)}</text>')

        for xs, ys, _, color, dash, width in self.series:
            if not xs:
                continue
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}"
                              for x, y in zip(xs, ys))
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'  <polyline points="{coords}" fill="none" '
                       f'stroke="{color}" stroke-width="{width}"{dash_attr}/>')

        for xs, ys, color, radius in self.points:
            for x, y in zip(xs, ys):
                out.append(f'  <circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" '
                           f'r="{radius}" fill="{color}"/>')

        for x, y, text, color, dx, dy, size in self.labels:
            out.append(f'  <text x="{_fmt(sx(x) + dx)}" y="{_fmt(sy(y) + dy)}" '
                       f'font-size="{size}" fill="{color}" '
                       f'font-family="sans-serif">{_escape(text)}</text>')

        legend_entries = [(label, color, dash)
                          for _, _, label, color, dash, _ in self.series if label]
        for i, (label, color, dash) in enumerate(legend_entries):
            ly = y0 + 14 + 16 * i
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'  <line x1="{x1 - 120}" y1="{ly}" x2="{x1 - 96}" '
                       f'y2="{ly}" stroke="{color}" stroke-width="2"{dash_attr}/>')
            out.append(f'  <text x="{x1 - 90}" y="{ly + 4}" font-size="11" '
                       f'fill="#333333" font-family="sans-serif">'
                       f'{_escape(label)}</text>')

        out.append("</svg>")
        data = "\n".join(out) + "\n"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(data)
        return data
