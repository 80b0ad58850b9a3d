"""Minimal SVG writer for log-log rate plots (no plotting dependencies)."""

from __future__ import annotations

import math

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo, hi):
    """Decade tick positions covering [lo, hi] in log10 space."""
    a = math.floor(math.log10(lo))
    b = math.ceil(math.log10(hi))
    return [10.0**k for k in range(a, b + 1)]


def loglog_svg(series, title="", xlabel="", ylabel="", width=520, height=400):
    """Render a list of (label, xs, ys) into a log-log SVG plot string."""
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if x > 0 and y > 0]
    if not pts:
        return "<svg xmlns='http://www.w3.org/2000/svg'/>"
    xmin = min(p[0] for p in pts)
    xmax = max(p[0] for p in pts)
    ymin = min(p[1] for p in pts)
    ymax = max(p[1] for p in pts)
    if xmin == xmax:
        xmin, xmax = xmin * 0.5, xmax * 2
    if ymin == ymax:
        ymin, ymax = ymin * 0.5, ymax * 2
    ml, mr, mt, mb = 64, 16, 28, 44
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + pw * (math.log10(x) - math.log10(xmin)) / (math.log10(xmax) - math.log10(xmin))

    def sy(y):
        return mt + ph * (1 - (math.log10(y) - math.log10(ymin)) / (math.log10(ymax) - math.log10(ymin)))

    out = [f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}' "
           f"font-family='sans-serif' font-size='11'>",
           f"<rect x='{ml}' y='{mt}' width='{pw}' height='{ph}' fill='none' stroke='#444'/>"]
    if title:
        out.append(f"<text x='{width/2:.0f}' y='16' text-anchor='middle' font-size='13'>{title}</text>")
    for t in _ticks(xmin, xmax):
        if xmin <= t <= xmax:
            x = sx(t)
            out.append(f"<line x1='{x:.1f}' y1='{mt}' x2='{x:.1f}' y2='{mt+ph}' stroke='#ddd'/>")
            out.append(f"<text x='{x:.1f}' y='{mt+ph+16}' text-anchor='middle'>1e{int(math.log10(t))}</text>")
    for t in _ticks(ymin, ymax):
        if ymin <= t <= ymax:
            y = sy(t)
            out.append(f"<line x1='{ml}' y1='{y:.1f}' x2='{ml+pw}' y2='{y:.1f}' stroke='#ddd'/>")
            out.append(f"<text x='{ml-6}' y='{y+4:.1f}' text-anchor='end'>1e{int(math.log10(t))}</text>")
    if xlabel:
        out.append(f"<text x='{ml+pw/2:.0f}' y='{height-8}' text-anchor='middle'>{xlabel}</text>")
    if ylabel:
        out.append(f"<text x='14' y='{mt+ph/2:.0f}' text-anchor='middle' "
                   f"transform='rotate(-90 14 {mt+ph/2:.0f})'>{ylabel}</text>")
    for i, (label, xs, ys) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        path = " ".join(f"{'M' if j == 0 else 'L'}{sx(x):.1f},{sy(y):.1f}"
                        for j, (x, y) in enumerate(sorted(zip(xs, ys))) if x > 0 and y > 0)
        if path:
            out.append(f"<path d='{path}' fill='none' stroke='{color}' stroke-width='1.5'/>")
        for x, y in zip(xs, ys):
            if x > 0 and y > 0:
                out.append(f"<circle cx='{sx(x):.1f}' cy='{sy(y):.1f}' r='3' fill='{color}'/>")
        out.append(f"<text x='{ml+8}' y='{mt+16+14*i}' fill='{color}'>{label}</text>")
    out.append("</svg>")
    return "\n".join(out)
