"""Static SVG output for ROC curves and probability series.

Plain text SVG written by hand so files are byte-stable across platforms.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 360
MARGIN = 48
COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _frame(title: str) -> list[str]:
    x0, y0, x1, y1 = MARGIN, MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{escape(title)}</text>',
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="black"/>',
    ]


def _xy(u, v) -> tuple[np.ndarray, np.ndarray]:
    """Map unit-square coordinates to pixels."""
    w = WIDTH - 2 * MARGIN
    h = HEIGHT - 2 * MARGIN
    return MARGIN + np.asarray(u) * w, HEIGHT - MARGIN - np.asarray(v) * h


def _polyline(px, py, colour: str, width: float = 1.5) -> str:
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
    return f'<polyline fill="none" stroke="{colour}" stroke-width="{width}" points="{pts}"/>'


def roc_svg(curves: dict, title: str = "ROC") -> str:
    """ROC curves keyed by legend label (values are ``RocCurve``)."""
    out = _frame(title)
    dx, dy = _xy([0, 1], [0, 1])
    out.append(_polyline(dx, dy, "#999999", 1.0))
    for i, (label, curve) in enumerate(curves.items()):
        colour = COLOURS[i % len(COLOURS)]
        px, py = _xy(curve.fp_rate, curve.tp_rate)
        out.append(_polyline(px, py, colour))
        out.append(
            f'<text x="{WIDTH - MARGIN - 8}" y="{MARGIN + 16 + 16 * i}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="{colour}">'
            f"{escape(str(label))} (AUC {curve.auc:.3f})</text>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def probability_svg(dates, probabilities, realized, title: str = "") -> str:
    """Probability path with shaded bars for months where ``realized`` is 1."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(realized, dtype=np.float64)
    t = p.size
    out = _frame(title)
    if t == 0:
        out.append("</svg>")
        return "\n".join(out) + "\n"
    u = np.arange(t) / max(t - 1, 1)
    step = (WIDTH - 2 * MARGIN) / max(t - 1, 1)
    px, py = _xy(u, p)
    top = MARGIN
    height = HEIGHT - 2 * MARGIN
    for i in np.flatnonzero(y == 1):
        out.append(
            f'<rect x="{_fmt(px[i] - step / 2)}" y="{top}" width="{_fmt(step)}" '
            f'height="{height}" fill="#cccccc"/>'
        )
    out.append(_polyline(px, py, COLOURS[0]))
    for k in sorted({0, t // 2, t - 1}):
        out.append(
            f'<text x="{_fmt(px[k])}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{escape(str(dates[k]))}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
