"""Static SVG rendering of a series, its anomaly scores and label segments.

Hand-rolled SVG keeps the output small and the polyline budget explicit:
traces are uniformly subsampled to at most 4000 points each.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .metrics import label_segments

MAX_POINTS = 4000
WIDTH, HEIGHT = 960, 480
PANEL_H = (HEIGHT - 60) // 2
MARGIN = 40


def _downsample(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(y)
    stride = max(1, int(np.ceil(n / MAX_POINTS)))
    idx = np.arange(0, n, stride)
    return idx, y[idx]


def _polyline(x: np.ndarray, y: np.ndarray, x_span: int, y0: int, color: str) -> str:
    lo, hi = float(y.min()), float(y.max())
    span = hi - lo or 1.0
    px = MARGIN + (WIDTH - 2 * MARGIN) * x / max(1, x_span - 1)
    py = y0 + PANEL_H - PANEL_H * (y - lo) / span
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>'


def render_svg(values_first_channel, scores, labels=None, path=None) -> str:
    """Two stacked panels: the series (first channel) and the score trace.

    Ground-truth segments, when labels are given, are shaded across both
    panels. Returns the SVG text; writes it to ``path`` when given.
    """
    y = np.asarray(values_first_channel, dtype=np.float64).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if len(y) != len(s):
        raise InputError(f"series length {len(y)} != scores length {len(s)}")
    if labels is not None and len(np.asarray(labels).ravel()) != len(y):
        raise InputError("labels length does not match series length")
    n = len(y)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if labels is not None:
        for a, b in label_segments(np.asarray(labels).ravel()):
            x0 = MARGIN + (WIDTH - 2 * MARGIN) * a / max(1, n - 1)
            x1 = MARGIN + (WIDTH - 2 * MARGIN) * (b + 1) / max(1, n - 1)
            parts.append(
                f'<rect x="{x0:.2f}" y="{MARGIN}" width="{max(x1 - x0, 1.0):.2f}" '
                f'height="{HEIGHT - 2 * MARGIN}" fill="#fdd" stroke="none"/>'
            )
    xi, yi = _downsample(y)
    parts.append(_polyline(xi, yi, n, MARGIN, "#1f4e9c"))
    xi, si = _downsample(s)
    parts.append(_polyline(xi, si, n, MARGIN + PANEL_H + 20, "#c23b22"))
    parts.append(f'<text x="{MARGIN}" y="{MARGIN - 8}" font-size="12">series</text>')
    parts.append(
        f'<text x="{MARGIN}" y="{MARGIN + PANEL_H + 12}" font-size="12">anomaly score</text>'
    )
    parts.append("</svg>")
    svg = "\n".join(parts)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg
