"""Dependency-free SVG bar charts for distance-distribution plots."""

from __future__ import annotations

import numpy as np

_WIDTH = 640
_HEIGHT = 360
_MARGIN = 48
_PLUS_COLOR = "#1f77b4"
_MINUS_COLOR = "#d62728"


def _bar(x: float, y: float, w: float, h: float, color: str) -> str:
    return (f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
            f'fill="{color}" fill-opacity="0.85"/>')


def write_histogram_svg(path, p_plus: np.ndarray, p_minus: np.ndarray,
                        title: str = "Hamming distance distributions") -> None:
    """Paired bar chart of neighbor vs non-neighbor distance mass per bin."""
    p_plus = np.asarray(p_plus, dtype=np.float64)
    p_minus = np.asarray(p_minus, dtype=np.float64)
    bins = p_plus.shape[0]
    top = max(float(p_plus.max(initial=0.0)), float(p_minus.max(initial=0.0)), 1e-9)
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN
    slot = plot_w / bins
    bar_w = slot * 0.4

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        # axes
        f'<line x1="{_MARGIN}" y1="{_HEIGHT - _MARGIN}" x2="{_WIDTH - _MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" '
        f'y2="{_HEIGHT - _MARGIN}" stroke="black"/>',
    ]
    for l in range(bins):
        x0 = _MARGIN + l * slot
        h_plus = plot_h * p_plus[l] / top
        h_minus = plot_h * p_minus[l] / top
        base = _HEIGHT - _MARGIN
        parts.append(_bar(x0 + slot * 0.08, base - h_plus, bar_w, h_plus, _PLUS_COLOR))
        parts.append(_bar(x0 + slot * 0.52, base - h_minus, bar_w, h_minus, _MINUS_COLOR))
        if bins <= 40 or l % max(1, bins // 16) == 0:
            parts.append(
                f'<text x="{x0 + slot / 2:.2f}" y="{base + 16}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{l}</text>')
    legend_y = _MARGIN / 2 + 14
    parts.append(_bar(_WIDTH - _MARGIN - 170, legend_y, 12, 12, _PLUS_COLOR))
    parts.append(f'<text x="{_WIDTH - _MARGIN - 152}" y="{legend_y + 10}" '
                 f'font-family="sans-serif" font-size="11">neighbors</text>')
    parts.append(_bar(_WIDTH - _MARGIN - 80, legend_y, 12, 12, _MINUS_COLOR))
    parts.append(f'<text x="{_WIDTH - _MARGIN - 62}" y="{legend_y + 10}" '
                 f'font-family="sans-serif" font-size="11">non-neighbors</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
