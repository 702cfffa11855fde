"""SVG heatmaps of one attribution slice with the input spikes drawn on top.

Red marks positive attribution, blue negative and white zero. The colour
scale is symmetric and set by the slice's largest absolute value.
"""
from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

CELL_W = 6
ROW_H = 24
LEFT = 90
TOP = 30


def cell_color(value: float, scale: float) -> str:
    """Hex colour of ``value`` on a white-centred red/blue scale."""
    if scale <= 0 or value == 0:
        return "#ffffff"
    level = min(abs(value) / scale, 1.0)
    fade = int(round(255 * (1.0 - level)))
    if value > 0:
        return f"#ff{fade:02x}{fade:02x}"
    return f"#{fade:02x}{fade:02x}ff"


def render_svg(attr: np.ndarray, x: np.ndarray, channel_names: Sequence[str],
               title: Optional[str] = None, first_step: int = 0) -> str:
    """Render a ``D x T`` attribution slice over the matching binary input."""
    attr = np.asarray(attr, dtype=np.float64)
    x = np.asarray(x)
    if attr.shape != x.shape:
        raise ValueError(f"attribution {attr.shape} and input {x.shape} differ in shape")
    if len(channel_names) != attr.shape[0]:
        raise ValueError("one channel name per row is required")
    D, T = attr.shape
    scale = float(np.abs(attr).max()) if attr.size else 0.0
    width = LEFT + T * CELL_W + 10
    height = TOP + D * ROW_H + 30
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT}" y="18" font-family="sans-serif" font-size="12">'
                   f'{escape(title)}</text>')
    for d in range(D):
        y = TOP + d * ROW_H
        out.append(f'<text x="{LEFT - 6}" y="{y + ROW_H / 2 + 4:g}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{escape(str(channel_names[d]))}</text>')
        for k in range(T):
            out.append(f'<rect class="cell" x="{LEFT + k * CELL_W}" y="{y}" width="{CELL_W}" '
                       f'height="{ROW_H}" fill="{cell_color(attr[d, k], scale)}"/>')
        for k in np.flatnonzero(x[d]):
            cx = LEFT + k * CELL_W + CELL_W / 2
            out.append(f'<line class="spike" x1="{cx:g}" y1="{y + 3}" x2="{cx:g}" '
                       f'y2="{y + ROW_H - 3}" stroke="#000000" stroke-width="1"/>')
    axis_y = TOP + D * ROW_H + 14
    out.append(f'<text x="{LEFT}" y="{axis_y}" font-family="sans-serif" font-size="10">'
               f't={first_step}</text>')
    out.append(f'<text x="{LEFT + T * CELL_W}" y="{axis_y}" text-anchor="end" '
               f'font-family="sans-serif" font-size="10">t={first_step + T - 1}</text>')
    out.append(f'<text x="{width - 10}" y="{axis_y + 12}" text-anchor="end" '
               f'font-family="sans-serif" font-size="9">max |a| = {scale:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
