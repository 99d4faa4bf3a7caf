"""Minimal dependency-free SVG bar and line charts."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 720, 420
L, R, TOP, BOTTOM = 70, 180, 40, 60
COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
          "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _frame(title, xlabel, ylabel, ymax, body, ymin=0.0):
    pw, ph = W - L - R, H - TOP - BOTTOM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{L}" y1="{TOP + ph}" x2="{L + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{L}" y1="{TOP}" x2="{L}" y2="{TOP + ph}" stroke="black"/>',
           f'<text x="{L + pw / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{TOP + ph / 2}" text-anchor="middle" transform="rotate(-90 15 {TOP + ph / 2})">{escape(ylabel)}</text>']
    for k in range(6):
        v = ymin + (ymax - ymin) * k / 5
        y = TOP + ph - ph * k / 5
        out.append(f'<line x1="{L - 4}" y1="{y:.1f}" x2="{L}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    out += body
    out.append("</svg>")
    return "\n".join(out)


def _legend(names):
    out = []
    for k, name in enumerate(names):
        y = TOP + 14 * k
        c = COLORS[k % len(COLORS)]
        out.append(f'<rect x="{W - R + 10}" y="{y}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{W - R + 25}" y="{y + 9}">{escape(name)}</text>')
    return out


def bar_chart(labels, series: dict, errors: dict | None = None, title="", xlabel="", ylabel="") -> str:
    """Grouped bars, one group per label and one bar per series."""
    errors = errors or {}
    tops = [v + (e or 0) for name, vals in series.items()
            for v, e in zip(vals, errors.get(name, [0] * len(vals))) if v is not None and math.isfinite(v)]
    ymax = max(tops, default=1.0) * 1.1 or 1.0
    pw, ph = W - L - R, H - TOP - BOTTOM
    gw = pw / max(len(labels), 1)
    bw = gw * 0.8 / max(len(series), 1)
    body = []
    for i, lab in enumerate(labels):
        body.append(f'<text x="{L + gw * (i + 0.5):.1f}" y="{TOP + ph + 15}" text-anchor="middle">{escape(lab)}</text>')
    for k, (name, vals) in enumerate(series.items()):
        c = COLORS[k % len(COLORS)]
        for i, v in enumerate(vals):
            if v is None or not math.isfinite(v):
                continue
            x = L + gw * i + gw * 0.1 + bw * k
            h = ph * max(v, 0) / ymax
            body.append(f'<rect x="{x:.1f}" y="{TOP + ph - h:.1f}" width="{bw:.1f}" height="{h:.1f}" fill="{c}"/>')
            e = errors.get(name, [0] * len(vals))[i] or 0
            if e > 0:
                y0, y1 = TOP + ph - ph * (v - e) / ymax, TOP + ph - ph * (v + e) / ymax
                xm = x + bw / 2
                body.append(f'<line x1="{xm:.1f}" y1="{y0:.1f}" x2="{xm:.1f}" y2="{y1:.1f}" stroke="black"/>')
    return _frame(title, xlabel, ylabel, ymax, body + _legend(series))


def line_chart(series: dict, title="", xlabel="", ylabel="") -> str:
    """Polylines of ``{name: (xs, ys)}`` on shared linear axes."""
    xs_all = _finite(x for xs, _ in series.values() for x in xs)
    ys_all = _finite(y for _, ys in series.values() for y in ys)
    xmin, xmax = min(xs_all, default=0.0), max(xs_all, default=1.0)
    ymin = min(0.0, min(ys_all, default=0.0))
    ymax = max(ys_all, default=1.0) * 1.1 or 1.0
    span_x = (xmax - xmin) or 1.0
    span_y = (ymax - ymin) or 1.0
    pw, ph = W - L - R, H - TOP - BOTTOM
    body = []
    for x in sorted(set(xs_all)):
        px = L + pw * (x - xmin) / span_x
        body.append(f'<text x="{px:.1f}" y="{TOP + ph + 15}" text-anchor="middle">{x:g}</text>')
    for k, (name, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(f"{L + pw * (x - xmin) / span_x:.1f},{TOP + ph - ph * (y - ymin) / span_y:.1f}"
                       for x, y in sorted(zip(xs, ys)) if math.isfinite(y))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{COLORS[k % len(COLORS)]}" stroke-width="1.5"/>')
    names = list(series)
    if len(names) > 20:
        names = names[:20]
    return _frame(title, xlabel, ylabel, ymax, body + _legend(names), ymin)
