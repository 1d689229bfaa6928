"""Fixed-length region features over grayscale rasters.

The Q-network only ever sees regions through a featurizer, so a CNN-backed
extractor can replace :class:`GridFeaturizer` without touching the MDP.
"""

from __future__ import annotations

import math
from typing import Protocol

import numpy as np

from treerl.geometry import Window


class Featurizer(Protocol):
    dim: int

    def extract(self, raster: np.ndarray, w: Window) -> np.ndarray: ...

    def extract_global(self, raster: np.ndarray) -> np.ndarray: ...


def _cell_spans(lo: float, hi: float, grid: int, extent: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel index ranges for ``grid`` equal cells of ``[lo, hi]``.

    A pixel belongs to a cell when its center lies in the cell's half-open
    interval. Returns per-cell ``(start, stop)`` arrays; empty cells are
    re-pointed at the nearest non-empty cell (lower index on ties).
    """
    edges = lo + (hi - lo) * np.arange(grid + 1) / grid
    bounds = np.clip(np.ceil(edges - 0.5), 0, extent).astype(np.intp)
    starts, stops = bounds[:-1].copy(), bounds[1:].copy()
    nonempty = np.flatnonzero(stops > starts)
    if nonempty.size == 0:
        # window narrower than a pixel: fall back to the pixel under its center
        px = min(max(int(math.floor(0.5 * (lo + hi))), 0), extent - 1)
        return np.full(grid, px, dtype=np.intp), np.full(grid, px + 1, dtype=np.intp)
    for k in np.flatnonzero(stops <= starts):
        nearest = nonempty[np.argmin(np.abs(nonempty - k))]
        starts[k], stops[k] = starts[nearest], stops[nearest]
    return starts, stops


class GridFeaturizer:
    """Splits a window into ``grid x grid`` cells and records mean and max per cell.

    Output layout is row-major over cells with ``(mean, max)`` interleaved,
    so the vector has ``2 * grid**2`` entries.
    """

    def __init__(self, grid: int = 8) -> None:
        if grid < 1:
            raise ValueError("grid must be >= 1")
        self.grid = grid
        self.dim = 2 * grid * grid

    def extract(self, raster: np.ndarray, w: Window) -> np.ndarray:
        h, wd = raster.shape
        rs, re = _cell_spans(w.y0, w.y1, self.grid, h)
        cs, ce = _cell_spans(w.x0, w.x1, self.grid, wd)
        # unique non-empty spans are adjacent, so reduceat over their starts partitions the block
        ru, rmap = np.unique(rs, return_inverse=True)
        cu, cmap = np.unique(cs, return_inverse=True)
        r_lo, r_hi = ru[0], re.max()
        c_lo, c_hi = cu[0], ce.max()
        block = raster[r_lo:r_hi, c_lo:c_hi]
        sums = np.add.reduceat(np.add.reduceat(block, ru - r_lo, axis=0), cu - c_lo, axis=1)
        maxes = np.maximum.reduceat(np.maximum.reduceat(block, ru - r_lo, axis=0), cu - c_lo, axis=1)
        rows = np.diff(np.append(ru, r_hi))
        cols = np.diff(np.append(cu, c_hi))
        mins = np.minimum.reduceat(np.minimum.reduceat(block, ru - r_lo, axis=0), cu - c_lo, axis=1)
        # rounding in sum/count can nudge a mean just outside the cell's range
        means = np.clip(sums / np.outer(rows, cols), mins, maxes)
        out = np.empty((self.grid, self.grid, 2))
        out[..., 0] = means[np.ix_(rmap, cmap)]
        out[..., 1] = maxes[np.ix_(rmap, cmap)]
        return out.ravel()

    def extract_global(self, raster: np.ndarray) -> np.ndarray:
        h, w = raster.shape
        return self.extract(raster, Window(0.0, 0.0, float(w), float(h)))
