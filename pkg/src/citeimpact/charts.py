"""Deterministic SVG emission for report figures: line charts and box plots.

Hand-rolled on purpose: the output is plain text, stable across runs, and
derivable from the report CSV alone.
"""

from __future__ import annotations

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 60, "right": 20, "top": 40, "bottom": 50}
PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _scale(value, lo, hi, out_lo, out_hi):
    if hi == lo:
        return (out_lo + out_hi) / 2.0
    return out_lo + (value - lo) / (hi - lo) * (out_hi - out_lo)


def _frame(title, y_lo, y_hi, x_labels, x_positions):
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for i in range(5):
        yv = y_lo + i * (y_hi - y_lo) / 4
        yy = _scale(yv, y_lo, y_hi, y0, y1)
        parts.append(
            f'<text x="{x0 - 8}" y="{yy:.1f}" text-anchor="end" font-size="10">{_fmt(yv)}</text>'
        )
        parts.append(
            f'<line x1="{x0}" y1="{yy:.1f}" x2="{x1}" y2="{yy:.1f}" stroke="#dddddd"/>'
        )
    for label, xx in zip(x_labels, x_positions):
        parts.append(
            f'<text x="{xx:.1f}" y="{y0 + 16}" text-anchor="middle" font-size="10">{label}</text>'
        )
    return parts, (x0, x1, y0, y1)


def line_chart(series: dict[str, list[tuple[float, float]]], title: str,
               y_label: str = "") -> str:
    """series: name -> [(x, y), ...] with numeric x."""
    all_pts = [p for pts in series.values() for p in pts]
    if not all_pts:
        return '<svg xmlns="http://www.w3.org/2000/svg"/>'
    xs = sorted({p[0] for p in all_pts})
    y_lo = min(0.0, min(p[1] for p in all_pts))
    y_hi = max(1.0, max(p[1] for p in all_pts))
    x_positions = [
        _scale(x, xs[0], xs[-1], MARGIN["left"] + 10, WIDTH - MARGIN["right"] - 10)
        for x in xs
    ]
    parts, (x0, x1, y0, y1) = _frame(title, y_lo, y_hi, [str(x) for x in xs], x_positions)
    pos_of = dict(zip(xs, x_positions))
    for i, name in enumerate(sorted(series)):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(series[name])
        coords = " ".join(
            f"{pos_of[x]:.1f},{_scale(y, y_lo, y_hi, y0, y1):.1f}" for x, y in pts
        )
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{x1 - 150}" y="{y1 + 14 * (i + 1)}" font-size="10" fill="{color}">{name}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{HEIGHT // 2}" font-size="11" transform="rotate(-90 14 {HEIGHT // 2})" text-anchor="middle">{y_label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def box_plot(stats: list, title: str, y_label: str = "") -> str:
    """stats: SummaryStats-like objects with group/median/q1/q3/min/max."""
    if not stats:
        return '<svg xmlns="http://www.w3.org/2000/svg"/>'
    labels = ["/".join(str(g) for g in s.group) for s in stats]
    n = len(stats)
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    slot = (x1 - x0) / n
    centers = [x0 + slot * (i + 0.5) for i in range(n)]
    y_lo = min(0.0, min(s.min for s in stats))
    y_hi = max(1.0, max(s.max for s in stats))
    parts, (x0, x1, y0, y1) = _frame(title, y_lo, y_hi, labels, centers)

    def sy(v):
        return _scale(v, y_lo, y_hi, y0, y1)

    box_w = min(40.0, slot * 0.6)
    for i, s in enumerate(stats):
        cx = centers[i]
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<line x1="{cx:.1f}" y1="{sy(s.min):.1f}" x2="{cx:.1f}" y2="{sy(s.max):.1f}" stroke="{color}"/>')
        parts.append(
            f'<rect x="{cx - box_w / 2:.1f}" y="{sy(s.q3):.1f}" width="{box_w:.1f}" '
            f'height="{abs(sy(s.q1) - sy(s.q3)):.1f}" fill="{color}" fill-opacity="0.3" stroke="{color}"/>'
        )
        parts.append(
            f'<line x1="{cx - box_w / 2:.1f}" y1="{sy(s.median):.1f}" x2="{cx + box_w / 2:.1f}" '
            f'y2="{sy(s.median):.1f}" stroke="{color}" stroke-width="2"/>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{HEIGHT // 2}" font-size="11" transform="rotate(-90 14 {HEIGHT // 2})" text-anchor="middle">{y_label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
