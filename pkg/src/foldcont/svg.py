"""Minimal deterministic SVG writer for diagrams, contours and heat maps.

Output is a pure function of the input: same series in, same bytes out.
Each polyline/point series carries its data-space coordinates in a
``data-pts`` attribute (17 significant digits) so plots are machine
readable; pixel coordinates are only for display.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

WIDTH, HEIGHT = 720, 540
MARGIN = 56

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#17becf", "#7f7f7f"]


@dataclass
class Series:
    label: str
    points: np.ndarray                  # (m, 2) data coordinates
    kind: str = "polyline"              # polyline | points
    dash: str = ""                      # e.g. "4,3" for dotted
    color: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if self.points.size and not np.all(np.isfinite(self.points)):
            raise ValueError("series coordinates must be finite")


@dataclass
class PlotStyle:
    title: str = ""
    x_label: str = "x"
    y_label: str = "y"
    marker_radius: float = 3.0
    extra: dict = field(default_factory=dict)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _px(x: float) -> str:
    return format(float(x), ".3f")


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / target
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else float(t))
        t += step
    return ticks


def render_svg(series: list[Series], style: PlotStyle | None = None) -> str:
    """Standalone SVG with axes and labels; byte-stable for fixed input."""
    style = style or PlotStyle()
    pts = [s.points for s in series if s.points.size]
    if pts:
        allpts = np.vstack(pts)
        x_lo, y_lo = allpts.min(axis=0)
        x_hi, y_hi = allpts.max(axis=0)
        if x_hi - x_lo < 1e-12:
            x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
        if y_hi - y_lo < 1e-12:
            y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
        pad_x = 0.05 * (x_hi - x_lo)
        pad_y = 0.05 * (y_hi - y_lo)
        x_lo, x_hi = x_lo - pad_x, x_hi + pad_x
        y_lo, y_hi = y_lo - pad_y, y_hi + pad_y
    else:
        x_lo, x_hi, y_lo, y_hi = 0.0, 1.0, 0.0, 1.0

    def to_px(p):
        x = MARGIN + (p[0] - x_lo) / (x_hi - x_lo) * (WIDTH - 2 * MARGIN)
        y = HEIGHT - MARGIN - (p[1] - y_lo) / (y_hi - y_lo) * (HEIGHT - 2 * MARGIN)
        return x, y

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if style.title:
        out.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_escape(style.title)}</text>'
        )
    # axes box and ticks
    out.append(
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" '
        f'height="{HEIGHT - 2 * MARGIN}" fill="none" stroke="#444" stroke-width="1"/>'
    )
    for t in _nice_ticks(x_lo, x_hi):
        px, _ = to_px((t, y_lo))
        out.append(
            f'<line x1="{_px(px)}" y1="{HEIGHT - MARGIN}" x2="{_px(px)}" '
            f'y2="{HEIGHT - MARGIN + 5}" stroke="#444"/>'
        )
        out.append(
            f'<text x="{_px(px)}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{t:g}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        _, py = to_px((x_lo, t))
        out.append(
            f'<line x1="{MARGIN - 5}" y1="{_px(py)}" x2="{MARGIN}" y2="{_px(py)}" '
            f'stroke="#444"/>'
        )
        out.append(
            f'<text x="{MARGIN - 8}" y="{_px(py)}" text-anchor="end" dy="3" '
            f'font-family="sans-serif" font-size="10">{t:g}</text>'
        )
    out.append(
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_escape(style.x_label)}</text>'
    )
    out.append(
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {HEIGHT // 2})">'
        f"{_escape(style.y_label)}</text>"
    )

    for i, s in enumerate(series):
        color = s.color or _PALETTE[i % len(_PALETTE)]
        data = " ".join(f"{_fmt(p[0])},{_fmt(p[1])}" for p in s.points)
        if s.kind == "polyline" and len(s.points) >= 2:
            pix = " ".join("%s,%s" % tuple(map(_px, to_px(p))) for p in s.points)
            dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
            out.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.4"{dash} '
                f'points="{pix}" data-label="{_escape(s.label)}" data-pts="{data}"/>'
            )
        else:
            circles = "".join(
                f'<circle cx="{_px(to_px(p)[0])}" cy="{_px(to_px(p)[1])}" '
                f'r="{style.marker_radius}" fill="{color}"/>'
                for p in s.points
            )
            out.append(
                f'<g data-label="{_escape(s.label)}" data-pts="{data}">{circles}</g>'
            )
    # legend
    ly = MARGIN + 14
    for i, s in enumerate(series):
        color = s.color or _PALETTE[i % len(_PALETTE)]
        out.append(
            f'<rect x="{WIDTH - MARGIN - 150}" y="{ly - 9}" width="10" height="10" '
            f'fill="{color}"/>'
            f'<text x="{WIDTH - MARGIN - 135}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{_escape(s.label)}</text>'
        )
        ly += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"


def parse_series(svg_text: str) -> dict[str, np.ndarray]:
    """Recover the data-space coordinates of every labeled series."""
    found: dict[str, np.ndarray] = {}
    for label, data in re.findall(r'data-label="([^"]*)" data-pts="([^"]*)"', svg_text):
        pts = [
            [float(a) for a in pair.split(",")] for pair in data.split() if pair
        ]
        found[label] = np.array(pts) if pts else np.empty((0, 2))
    return found


def heatmap_svg(points: np.ndarray, values: np.ndarray, title: str = "",
                cell: float | None = None) -> str:
    """Colored-square field plot for scattered grid data (node positions +
    one value per node)."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    if cell is None and len(points) > 1:
        d = np.diff(np.unique(points[:, 0]))
        cell = float(d[d > 1e-12].min()) if np.any(d > 1e-12) else 1.0
    cell = cell or 1.0
    x_lo, y_lo = points.min(axis=0) - cell
    x_hi, y_hi = points.max(axis=0) + cell
    scale = (WIDTH - 2 * MARGIN) / max(x_hi - x_lo, y_hi - y_lo)

    def to_px(p):
        return (MARGIN + (p[0] - x_lo) * scale, HEIGHT - MARGIN - (p[1] - y_lo) * scale)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{_escape(title)}</text>'
        )
    side = _px(cell * scale)
    for p, v in zip(points, values):
        frac = (float(v) - lo) / span
        r = int(round(255 * frac))
        b = int(round(255 * (1.0 - frac)))
        px, py = to_px(p)
        out.append(
            f'<rect x="{_px(px - cell * scale / 2)}" y="{_px(py - cell * scale / 2)}" '
            f'width="{side}" height="{side}" fill="rgb({r},64,{b})"/>'
        )
    out.append(
        f'<text x="{MARGIN}" y="{HEIGHT - 16}" font-family="sans-serif" font-size="11">'
        f"min={lo:.6g} max={hi:.6g}</text>"
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )
