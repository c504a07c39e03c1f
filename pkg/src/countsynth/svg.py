"""Hand-written SVG rendering of the fitted time trend.

Shaded 95% band and dashed median curve for the regression, plus one point
and whisker per study (its shrinkage estimate); marker shape encodes the
study's reporting format.  Studies sharing a publication year are spread
evenly within the year so every whisker stays visible.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

from .regression import FitReport

WIDTH, HEIGHT = 860, 520
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 180, 30, 50

MARKERS = {"rate+se": "circle", "count+zeros": "square",
           "count": "triangle", "zeros": "diamond"}


def _ticks_log(lo: float, hi: float) -> list[float]:
    ticks = []
    e = math.floor(math.log10(lo))
    while 10.0 ** e <= hi * 1.0001:
        for m in (1, 2, 5):
            v = m * 10.0 ** e
            if lo * 0.9999 <= v <= hi * 1.0001:
                ticks.append(v)
        e += 1
    return ticks or [lo, hi]


def _marker(shape: str, x: float, y: float, size: float = 4.0) -> str:
    if shape == "circle":
        return f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{size:.1f}" class="pt"/>'
    if shape == "square":
        s = size
        return (f'<rect x="{x - s:.2f}" y="{y - s:.2f}" width="{2 * s:.1f}" '
                f'height="{2 * s:.1f}" class="pt"/>')
    if shape == "triangle":
        pts = f"{x:.2f},{y - size:.2f} {x - size:.2f},{y + size:.2f} " \
              f"{x + size:.2f},{y + size:.2f}"
        return f'<polygon points="{pts}" class="pt"/>'
    pts = f"{x:.2f},{y - size:.2f} {x - size:.2f},{y:.2f} " \
          f"{x:.2f},{y + size:.2f} {x + size:.2f},{y:.2f}"
    return f'<polygon points="{pts}" class="pt"/>'


def trend_svg(report: FitReport) -> str:
    if report.trend is None:
        raise ValueError("this fit has no trend curve to draw")
    trend = report.trend
    shrink = report.shrinkage

    x_lo = min(p.year for p in trend)
    x_hi = max(p.year for p in trend)
    y_vals = [p.ci_low for p in trend] + [p.ci_high for p in trend] + \
        [r.ci_low for r in shrink] + [r.ci_high for r in shrink]
    y_lo = max(min(y_vals) * 0.8, 1e-3)
    y_hi = max(y_vals) * 1.2

    inner_w = WIDTH - MARGIN_L - MARGIN_R
    inner_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(year: float) -> float:
        return MARGIN_L + (year - x_lo) / (x_hi - x_lo) * inner_w

    def sy(rate: float) -> float:
        rate = min(max(rate, y_lo), y_hi)
        f = (math.log10(rate) - math.log10(y_lo)) / \
            (math.log10(y_hi) - math.log10(y_lo))
        return MARGIN_T + (1.0 - f) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        "<style>"
        ".band{fill:#9ecae1;fill-opacity:0.45;stroke:none}"
        ".median{fill:none;stroke:#08519c;stroke-width:1.6;"
        "stroke-dasharray:7 5}"
        ".pt{fill:#333;stroke:none}"
        ".whisker{stroke:#666;stroke-width:1}"
        ".axis{stroke:#000;stroke-width:1}"
        ".grid{stroke:#ddd;stroke-width:0.5}"
        "text{font-family:sans-serif;font-size:12px;fill:#000}"
        "</style>",
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]

    band_up = " ".join(f"{sx(p.year):.2f},{sy(p.ci_high):.2f}" for p in trend)
    band_dn = " ".join(f"{sx(p.year):.2f},{sy(p.ci_low):.2f}"
                       for p in reversed(trend))
    parts.append(f'<polygon points="{band_up} {band_dn}" class="band"/>')

    median = " ".join(f"{sx(p.year):.2f},{sy(p.median):.2f}" for p in trend)
    parts.append(f'<polyline points="{median}" class="median"/>')

    by_year = defaultdict(list)
    for row in shrink:
        by_year[row.year].append(row)
    for year, rows in sorted(by_year.items()):
        k = len(rows)
        for i, row in enumerate(rows):
            x = sx(year + (i + 1) / (k + 1) - 0.5)
            parts.append(f'<line x1="{x:.2f}" y1="{sy(row.ci_low):.2f}" '
                         f'x2="{x:.2f}" y2="{sy(row.ci_high):.2f}" '
                         'class="whisker"/>')
            parts.append(_marker(MARKERS[row.evidence_format], x,
                                 sy(row.median)))

    # axes
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN_R}" '
                 f'y2="{y0}" class="axis"/>')
    parts.append(f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" '
                 'class="axis"/>')
    step = max(1, int(round((x_hi - x_lo) / 10)))
    year = int(math.ceil(x_lo))
    while year <= x_hi:
        x = sx(year)
        parts.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" '
                     f'y2="{y0 + 4}" class="axis"/>')
        parts.append(f'<text x="{x:.2f}" y="{y0 + 18}" '
                     f'text-anchor="middle">{year}</text>')
        year += step
    for tick in _ticks_log(y_lo, y_hi):
        y = sy(tick)
        parts.append(f'<line x1="{x0 - 4}" y1="{y:.2f}" x2="{x0}" '
                     f'y2="{y:.2f}" class="axis"/>')
        parts.append(f'<line x1="{x0}" y1="{y:.2f}" '
                     f'x2="{WIDTH - MARGIN_R}" y2="{y:.2f}" class="grid"/>')
        parts.append(f'<text x="{x0 - 8}" y="{y + 4:.2f}" '
                     f'text-anchor="end">{tick:g}</text>')
    parts.append(f'<text x="{(x0 + WIDTH - MARGIN_R) / 2:.0f}" '
                 f'y="{HEIGHT - 12}" text-anchor="middle">Publication year'
                 '</text>')
    parts.append(f'<text x="16" y="{(MARGIN_T + y0) / 2:.0f}" '
                 f'transform="rotate(-90 16 {(MARGIN_T + y0) / 2:.0f})" '
                 'text-anchor="middle">Events per patient-year</text>')

    # legend
    lx = WIDTH - MARGIN_R + 16
    ly = MARGIN_T + 10
    parts.append(f'<text x="{lx}" y="{ly}" font-weight="bold">Reporting'
                 '</text>')
    for i, (fmt, shape) in enumerate(MARKERS.items()):
        y = ly + 20 + i * 20
        parts.append(_marker(shape, lx + 6, y - 4))
        parts.append(f'<text x="{lx + 18}" y="{y}">{fmt}</text>')
    y = ly + 20 + len(MARKERS) * 20 + 10
    parts.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 14}" y2="{y - 4}" '
                 'class="median"/>')
    parts.append(f'<text x="{lx + 18}" y="{y}">median trend</text>')
    parts.append(f'<rect x="{lx}" y="{y + 8}" width="14" height="10" '
                 'class="band"/>')
    parts.append(f'<text x="{lx + 18}" y="{y + 17}">95% credible band</text>')

    parts.append(f'<text x="{MARGIN_L}" y="{MARGIN_T - 10}">{report.label}'
                 '</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_trend_svg(report: FitReport, path: str | Path) -> None:
    Path(path).write_text(trend_svg(report), encoding="utf-8")
