"""Simulated scenes as (a, s) pairs.

Opaque matter is stored with ``a = eps`` and empty space with ``s = eps`` so
every phantom is a feasible solver input.  Disk coordinates are in pixel
index units: pixel (ix, iy) has its center at (ix, iy).
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .forward import EPSILON, ObjectState
from .grid import Grid

__all__ = ["Disk", "default_disks", "five_circles", "point_sources", "shape", "SHAPES"]

SHAPES = ("square", "circle", "cross")

# (cx, cy, r) as fractions of the grid size; pairwise disjoint.  The layout
# keeps the longest linear chord sum at 50x50 near 25.
FIVE_CIRCLES = (
    (0.28, 0.28, 0.12),
    (0.72, 0.25, 0.10),
    (0.84, 0.50, 0.09),
    (0.25, 0.75, 0.11),
    (0.75, 0.76, 0.10),
)


class Disk(NamedTuple):
    cx: float
    cy: float
    r: float


def _pixel_xy(grid: Grid):
    iy, ix = np.divmod(np.arange(grid.n_pixels), grid.nx)
    return ix.astype(float), iy.astype(float)


def disk_mask(grid: Grid, disk: Disk) -> np.ndarray:
    ix, iy = _pixel_xy(grid)
    return (ix - disk.cx) ** 2 + (iy - disk.cy) ** 2 <= disk.r**2


def default_disks(grid: Grid) -> list[Disk]:
    n = min(grid.nx, grid.ny)
    return [Disk(fx * (grid.nx - 1), fy * (grid.ny - 1), fr * n) for fx, fy, fr in FIVE_CIRCLES]


def _validate_disks(grid: Grid, disks: Sequence[Disk]) -> list[np.ndarray]:
    masks = []
    for d in disks:
        if d.r <= 0:
            raise ValueError(f"disk radius must be > 0: {d}")
        if d.cx - d.r < -0.5 or d.cx + d.r > grid.nx - 0.5 or d.cy - d.r < -0.5 or d.cy + d.r > grid.ny - 0.5:
            raise ValueError(f"disk {d} does not fit in a {grid.nx}x{grid.ny} grid")
        m = disk_mask(grid, d)
        if not m.any():
            raise ValueError(f"disk {d} covers no pixel center")
        masks.append(m)
    return masks


def five_circles(grid: Grid, disks: Sequence[Disk] | None = None, eps: float = EPSILON) -> ObjectState:
    """Five disjoint opaque disks that are bright on every disk pixel."""
    disks = default_disks(grid) if disks is None else list(disks)
    masks = _validate_disks(grid, disks)
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if np.any(masks[i] & masks[j]):
                raise ValueError(f"disks {disks[i]} and {disks[j]} overlap")
    matter = np.any(masks, axis=0)
    return ObjectState(np.where(matter, eps, 1.0), np.where(matter, 1.0, eps))


def point_sources(
    grid: Grid,
    n_sources: int,
    occluders: Sequence[Disk] | None = None,
    seed: int = 0,
    min_separation: int = 3,
    margin: int = 2,
    eps: float = EPSILON,
) -> tuple[ObjectState, np.ndarray]:
    """Dark opaque occluders plus single-pixel unit sources.

    Source pixels are drawn from ``seed`` with a Chebyshev spacing of at
    least ``min_separation``; a source may land inside an occluder.
    Returns the state and the flat indices of the sources.
    """
    if n_sources < 0:
        raise ValueError("n_sources must be >= 0")
    occluders = default_disks(grid) if occluders is None else list(occluders)
    masks = _validate_disks(grid, occluders)
    dark = np.any(masks, axis=0) if masks else np.zeros(grid.n_pixels, bool)
    a = np.where(dark, eps, 1.0)
    s = np.full(grid.n_pixels, eps)

    rng = np.random.default_rng(seed)
    lo_x, hi_x = margin, grid.nx - margin
    lo_y, hi_y = margin, grid.ny - margin
    if n_sources and (hi_x <= lo_x or hi_y <= lo_y):
        raise ValueError("grid too small for the requested margin")
    chosen: list[tuple[int, int]] = []
    tries = 0
    while len(chosen) < n_sources:
        tries += 1
        if tries > 10000 * max(n_sources, 1):
            raise ValueError("could not place sources with the requested separation")
        ix = int(rng.integers(lo_x, hi_x))
        iy = int(rng.integers(lo_y, hi_y))
        if all(max(abs(ix - px), abs(iy - py)) >= min_separation for px, py in chosen):
            chosen.append((ix, iy))
    idx = np.array([iy * grid.nx + ix for ix, iy in chosen], dtype=np.int64)
    s[idx] = 1.0
    return ObjectState(a, s), idx


def shape(kind: str, grid: Grid, eps: float = EPSILON) -> ObjectState:
    """Solid centered square, circle or cross; opaque and bright throughout.

    Sizes scale with the grid: square side 0.4 n, circle radius 0.25 n,
    cross span 0.625 n with arm width 0.1875 n (20 and 6 pixels at n=32).
    """
    if kind not in SHAPES:
        raise ValueError(f"unsupported shape {kind!r}; choose from {SHAPES}")
    ix, iy = _pixel_xy(grid)
    dx = ix - 0.5 * (grid.nx - 1)
    dy = iy - 0.5 * (grid.ny - 1)
    n = min(grid.nx, grid.ny)
    if kind == "square":
        h = 0.5 * round(0.4 * n)
        matter = (np.abs(dx) < h) & (np.abs(dy) < h)
    elif kind == "circle":
        matter = dx**2 + dy**2 <= (0.25 * n) ** 2
    else:
        span = 0.5 * round(0.625 * n)
        arm = 0.5 * round(0.1875 * n)
        inside = (np.abs(dx) < span) & (np.abs(dy) < span)
        matter = inside & ((np.abs(dx) < arm) | (np.abs(dy) < arm))
    if not matter.any():
        raise ValueError(f"grid {grid.nx}x{grid.ny} too small for a {kind}")
    return ObjectState(np.where(matter, eps, 1.0), np.where(matter, 1.0, eps))
