"""Minimal deterministic SVG line plot for the three log-curves of a trace."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

SERIES = (
    ("log_delta_psi", "log(delta psi)", "#1f77b4"),
    ("log_a", "log(a)", "#d62728"),
    ("log_psi", "log(psi)", "#2ca02c"),
)

W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 150, 30, 50


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def render(rows: list[dict], title: str = "") -> str:
    """SVG text; ``rows`` are trace dicts with ``k`` and the three log columns."""
    pts = {key: [(r["k"], float(r[key])) for r in rows if r.get(key) is not None]
           for key, _, _ in SERIES}
    ks = [r["k"] for r in rows] or [0]
    ys = [y for series in pts.values() for _, y in series] or [0.0]
    kmin, kmax = min(ks), max(max(ks), min(ks) + 1)
    ymin, ymax = min(ys + [0.0]), max(ys + [0.0])
    if ymax - ymin < 1e-9:
        ymin, ymax = ymin - 1, ymax + 1
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(k):
        return LEFT + (k - kmin) / (kmax - kmin) * pw

    def sy(y):
        return TOP + (ymax - y) / (ymax - ymin) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{TOP - 10}" text-anchor="middle">'
                   f"{escape(title)}</text>")
    # zero line: log value 0 marks the threshold 1
    out.append(f'<line x1="{LEFT}" y1="{sy(0.0):.2f}" x2="{LEFT + pw}" y2="{sy(0.0):.2f}" '
               'stroke="#999" stroke-dasharray="4 3"/>')
    kstep = max(1, math.ceil((kmax - kmin) / 10))
    for k in range(kmin, kmax + 1, kstep):
        out.append(f'<line x1="{sx(k):.2f}" y1="{TOP + ph}" x2="{sx(k):.2f}" y2="{TOP + ph + 5}" '
                   'stroke="black"/>')
        out.append(f'<text x="{sx(k):.2f}" y="{TOP + ph + 18}" text-anchor="middle">{k}</text>')
    for t in _nice_ticks(ymin, ymax):
        out.append(f'<line x1="{LEFT - 5}" y1="{sy(t):.2f}" x2="{LEFT}" y2="{sy(t):.2f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{H - 12}" text-anchor="middle">Iteration k</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">Value</text>')
    for i, (key, label, color) in enumerate(SERIES):
        series = pts[key]
        if len(series) > 1:
            path = " ".join(f"{sx(k):.2f},{sy(y):.2f}" for k, y in series)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for k, y in series:
            out.append(f'<circle cx="{sx(k):.2f}" cy="{sy(y):.2f}" r="2.5" fill="{color}"/>')
        ly = TOP + 15 + 18 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
