"""Ground-truth occluded data by first-hit ray marching, noise, visibility.

This path never touches the C/E factorization: each ray is walked from the
detector inward and stops at the first opaque pixel.
"""
from __future__ import annotations

import numpy as np

from .forward import SlantStack
from .grid import Grid, ViewSet
from .operators import RayTable, trace_views

__all__ = ["render_occluded", "add_noise", "visibility_map"]


def _check(grid: Grid, a, s=None, threshold=0.5):
    a = np.asarray(a, dtype=float).ravel()
    if len(a) != grid.n_pixels:
        raise ValueError(f"a has length {len(a)}, grid has {grid.n_pixels} pixels")
    if s is not None:
        s = np.asarray(s, dtype=float).ravel()
        if len(s) != grid.n_pixels:
            raise ValueError(f"s has length {len(s)}, grid has {grid.n_pixels} pixels")
    if not 0.0 < threshold < 1.0:
        raise ValueError("opaque_threshold must lie in (0, 1)")
    return a, s


def _march(table: RayTable, a: np.ndarray, threshold: float):
    """Detector-first padded layout plus the visible prefix of each ray.

    Returns ``(pos, keep, log_t)``: entry positions into the table (-1 for
    padding), the mask of crossings seen before or at the first opaque
    pixel, and the log transmittance from each crossing to the detector.
    """
    counts = np.diff(table.indptr)
    n = len(counts)
    width = int(counts.max()) if n else 0
    col = np.arange(width)[None, :]
    valid = col < counts[:, None]
    # reversed: column 0 is the crossing nearest the detector
    pos = np.where(valid, table.indptr[1:, None] - 1 - col, -1)
    pix = np.where(valid, table.pixels[np.maximum(pos, 0)], 0)
    av = a[pix]
    opaque = valid & (av <= threshold)
    hit = opaque.any(axis=1)
    first = np.where(hit, opaque.argmax(axis=1), width)
    keep = valid & (col <= first[:, None])
    trans = keep & ~opaque
    la = np.zeros(pos.shape)
    la[trans] = table.expo[pos[trans]] * np.log(av[trans])
    log_t = np.cumsum(la, axis=1) - la
    return pos, pix, keep, log_t


def render_occluded(
    grid: Grid,
    views: ViewSet,
    a,
    s,
    opaque_threshold: float = 0.5,
    weighting: str = "length",
) -> SlantStack:
    """Slant stack where each ray ends at its first opaque pixel.

    Transparent pixels in front of the first opaque one emit through the
    partial attenuation of the pixels between them and the detector.
    """
    a, s = _check(grid, a, s, opaque_threshold)
    table = trace_views(grid, views, weighting)
    pos, pix, keep, log_t = _march(table, a, opaque_threshold)
    contrib = np.zeros(pos.shape)
    contrib[keep] = table.weight[pos[keep]] * s[pix[keep]] * np.exp(log_t[keep])
    return SlantStack(contrib.sum(axis=1), views)


def visibility_map(
    grid: Grid,
    views: ViewSet,
    a,
    opaque_threshold: float = 0.5,
    weighting: str = "length",
) -> np.ndarray:
    """Per-pixel count of rays that reach the pixel before any opaque pixel.

    The first opaque pixel on a ray counts as seen; everything behind it
    does not.
    """
    a, _ = _check(grid, a, None, opaque_threshold)
    table = trace_views(grid, views, weighting)
    _, pix, keep, _ = _march(table, a, opaque_threshold)
    return np.bincount(pix[keep], minlength=grid.n_pixels)


def add_noise(stack: SlantStack, level: float, seed: int = 0) -> SlantStack:
    """Additive Gaussian noise with sigma = level * max|data|.

    Negative values are kept.
    """
    if level < 0:
        raise ValueError("noise level must be >= 0")
    data = stack.data
    sigma = float(level * np.max(np.abs(data))) if data.size else 0.0
    if sigma == 0.0:
        return SlantStack(data.copy(), stack.views, sigma)
    rng = np.random.default_rng(seed)
    return SlantStack(data + sigma * rng.standard_normal(data.shape), stack.views, sigma)
