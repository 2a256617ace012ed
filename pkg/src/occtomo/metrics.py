"""Scoring helpers for reconstructions: visible-pixel error, peak
localization and support overlap."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .grid import Grid

__all__ = [
    "visible_brightness_error",
    "local_maxima",
    "localize_sources",
    "support_mask",
    "iou",
]


def visible_brightness_error(s_est, s_true, visible, matter) -> float:
    """Median |s_est - s_true| over matter pixels seen by at least one ray."""
    sel = (np.asarray(visible) > 0) & np.asarray(matter, dtype=bool)
    if not sel.any():
        return float("nan")
    return float(np.median(np.abs(np.asarray(s_est)[sel] - np.asarray(s_true)[sel])))


def local_maxima(grid: Grid, values, rel_threshold: float = 0.25) -> np.ndarray:
    """Flat indices of 8-neighbor local maxima above ``rel_threshold * max``."""
    img = grid.to_image(np.asarray(values, dtype=float))
    peak = float(img.max())
    if not peak > 0:
        return np.zeros(0, dtype=np.int64)
    is_max = (img == ndimage.maximum_filter(img, size=3, mode="constant", cval=-np.inf)) & (
        img >= rel_threshold * peak
    )
    iy, ix = np.nonzero(is_max)
    return (iy * grid.nx + ix).astype(np.int64)


def localize_sources(grid: Grid, s_est, sources, radius: int = 1, rel_threshold: float = 0.25):
    """For each true source, the Chebyshev distance to its nearest peak of
    ``s_est`` and whether that distance is within ``radius``."""
    peaks = local_maxima(grid, s_est, rel_threshold)
    sources = np.asarray(sources, dtype=np.int64)
    if len(peaks) == 0:
        dist = np.full(len(sources), np.inf)
    else:
        sx, sy = grid.pixel_coords(sources)
        px, py = grid.pixel_coords(peaks)
        dist = np.max(
            np.stack([np.abs(sx[:, None] - px[None, :]), np.abs(sy[:, None] - py[None, :])]), axis=0
        ).min(axis=1).astype(float)
    return dist, dist <= radius


def support_mask(s, rel_threshold: float = 0.5) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    peak = float(s.max()) if s.size else 0.0
    if not peak > 0:
        return np.zeros(s.shape, dtype=bool)
    return s > rel_threshold * peak


def iou(m1, m2) -> float:
    m1 = np.asarray(m1, dtype=bool)
    m2 = np.asarray(m2, dtype=bool)
    union = np.count_nonzero(m1 | m2)
    return np.count_nonzero(m1 & m2) / union if union else 1.0
