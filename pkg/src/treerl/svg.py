"""Plain-text SVG output: scene renders with proposals, and recall line plots."""

from __future__ import annotations

import base64
import struct
import zlib
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from treerl.geometry import Window

LEVEL_COLORS = {2: "#00c000", 3: "#e0d000", 4: "#e00000"}
OTHER_COLOR = "#909090"
GT_COLOR = "#00a0ff"
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def _png_gray(raster: np.ndarray) -> bytes:
    """8-bit grayscale PNG of a [0, 1] raster."""
    levels = np.rint(np.clip(raster, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = levels.shape

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))

    # filter byte 0 (none) before every scanline
    rows = np.hstack([np.zeros((h, 1), dtype=np.uint8), levels]).tobytes()
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0))
        + chunk(b"IDAT", zlib.compress(rows, 9))
        + chunk(b"IEND", b"")
    )


def _rect(w: Window, color: str, cls: str, dashed: bool = False, width: float = 1.0) -> str:
    dash = ' stroke-dasharray="4 2"' if dashed else ""
    return (
        f'<rect class="{cls}" x="{w.x0:.3f}" y="{w.y0:.3f}" width="{w.width:.3f}" height="{w.height:.3f}" '
        f'fill="none" stroke="{color}" stroke-width="{width:g}"{dash}/>'
    )


def scene_svg(raster: np.ndarray, gts: Sequence[Window], proposals: Sequence[tuple[Window, int]]) -> str:
    """Raster background, dashed ground truths, and proposals colored by tree level."""
    h, w = raster.shape
    png = base64.b64encode(_png_gray(raster)).decode("ascii")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'width="{4 * w}" height="{4 * h}" viewBox="0 0 {w} {h}">',
        f'<image x="0" y="0" width="{w}" height="{h}" style="image-rendering:pixelated" '
        f'xlink:href="data:image/png;base64,{png}"/>',
    ]
    # deeper levels first so the coarse windows stay visible on top
    for window, level in sorted(proposals, key=lambda p: -p[1]):
        parts.append(_rect(window, LEVEL_COLORS.get(level, OTHER_COLOR), f"proposal level{level}", width=0.6))
    for g in gts:
        parts.append(_rect(g, GT_COLOR, "gt", dashed=True, width=0.8))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str,
    xlabel: str,
    ylabel: str,
    xlim: tuple[float, float],
    ylim: tuple[float, float] = (0.0, 1.0),
    size: tuple[int, int] = (420, 320),
) -> str:
    """A single self-contained SVG line plot; ``series`` holds ``(label, xs, ys)``."""
    W, H = size
    left, right, top, bottom = 55, 110, 30, 45
    pw, ph = W - left - right, H - top - bottom
    x_span = (xlim[1] - xlim[0]) or 1.0
    y_span = (ylim[1] - ylim[0]) or 1.0

    def sx(x: float) -> float:
        return left + pw * (x - xlim[0]) / x_span

    def sy(y: float) -> float:
        return top + ph * (1.0 - (y - ylim[0]) / y_span)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(6):
        fy = ylim[0] + y_span * i / 5
        fx = xlim[0] + x_span * i / 5
        out.append(f'<text x="{left - 6}" y="{sy(fy) + 4:.1f}" text-anchor="end">{fy:.2g}</text>')
        out.append(f'<text x="{sx(fx):.1f}" y="{top + ph + 15}" text-anchor="middle">{fx:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for k, (label, xs, ys) in enumerate(series):
        color = SERIES_COLORS[k % len(SERIES_COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = top + 12 + 16 * k
        out.append(f'<line x1="{left + pw + 8}" y1="{ly}" x2="{left + pw + 26}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 30}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
