"""Static SVG line chart of mAP against the number of real images per category."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from ..errors import ValidationError

WIDTH, HEIGHT = 480, 320
MARGIN = {"left": 60, "right": 140, "top": 20, "bottom": 50}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(x):
    return f"{x:.2f}"


def curve_svg(series, title="mAP vs real images"):
    """SVG text for ``series``: ``{name: [(k, mAP), ...]}``, one line and legend entry each."""
    series = {str(k): [(float(x), float(y)) for x, y in v] for k, v in series.items()}
    if not series or not any(series.values()):
        raise ValidationError("plot needs at least one point")
    xs = [x for pts in series.values() for x, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo, y_hi = 0.0, 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return MARGIN["top"] + (1 - (y - y_lo) / (y_hi - y_lo)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in sorted(set(xs)):
        out.append(f'<text x="{_f(sx(t))}" y="{y0 + 16}" font-size="11" text-anchor="middle">{t:g}</text>')
    for i in range(6):
        t = i / 5
        out.append(f'<text x="{x0 - 6}" y="{_f(sy(t) + 4)}" font-size="11" text-anchor="end">{t:.1f}</text>')
    out.append(f'<text class="xlabel" x="{_f(x0 + pw / 2)}" y="{HEIGHT - 10}" font-size="12" '
               f'text-anchor="middle">real images per category</text>')
    out.append(f'<text class="ylabel" x="14" y="{_f(MARGIN["top"] + ph / 2)}" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 14 {_f(MARGIN["top"] + ph / 2)})">mAP</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        pts = sorted(pts)
        if len(pts) > 1:
            coords = " ".join(f"{_f(sx(x))},{_f(sy(y))}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle class="marker" cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>'
                   f'<text x="{lx + 24}" y="{ly + 4}" font-size="11">{escape(name)}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_curve(series, path, title="mAP vs real images"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(curve_svg(series, title), encoding="utf-8")
    return path
