"""Pixel grid, ray families and ray/pixel intersection lengths."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ._backend import kernels

__all__ = [
    "Grid",
    "Ray",
    "Crossing",
    "PinholePose",
    "ViewSet",
    "make_grid",
    "parallel_views",
    "pinhole_views",
    "trace_ray",
    "trace_between",
    "trace_segments",
]


@dataclass(frozen=True)
class Grid:
    """Axis-aligned lattice of ``nx * ny`` square pixels.

    Flat index of pixel (ix, iy) is ``iy * nx + ix``; ``origin`` is the
    world position of the (xmin, ymin) corner.
    """

    nx: int
    ny: int
    pixel_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("grid dimensions must be integers")
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.nx}x{self.ny}")
        if not self.pixel_size > 0:
            raise ValueError(f"pixel_size must be > 0, got {self.pixel_size}")

    @property
    def n_pixels(self) -> int:
        return self.nx * self.ny

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) in world units."""
        x0, y0 = self.origin
        return (x0, x0 + self.nx * self.pixel_size, y0, y0 + self.ny * self.pixel_size)

    @property
    def radius(self) -> float:
        """Radius of the circumscribed disk about the grid center."""
        return 0.5 * self.pixel_size * float(np.hypot(self.nx, self.ny))

    @property
    def center(self) -> tuple[float, float]:
        x0, y0 = self.origin
        return (x0 + 0.5 * self.nx * self.pixel_size, y0 + 0.5 * self.ny * self.pixel_size)

    def flat_index(self, ix, iy):
        ix = np.asarray(ix)
        iy = np.asarray(iy)
        if np.any((ix < 0) | (ix >= self.nx) | (iy < 0) | (iy >= self.ny)):
            raise ValueError("pixel coordinates out of range")
        return iy * self.nx + ix

    def pixel_coords(self, index):
        index = np.asarray(index)
        if np.any((index < 0) | (index >= self.n_pixels)):
            raise ValueError("flat pixel index out of range")
        return index % self.nx, index // self.nx

    def pixel_center(self, index) -> np.ndarray:
        ix, iy = self.pixel_coords(index)
        x0, y0 = self.origin
        return np.stack(
            [x0 + (ix + 0.5) * self.pixel_size, y0 + (iy + 0.5) * self.pixel_size], axis=-1
        )

    def pixel_centers(self) -> np.ndarray:
        """(K, 2) array of all pixel centers in flat-index order."""
        return self.pixel_center(np.arange(self.n_pixels))

    def contains(self, point, closed: bool = True) -> bool:
        xmin, xmax, ymin, ymax = self.extent
        x, y = point
        if closed:
            return xmin <= x <= xmax and ymin <= y <= ymax
        return xmin < x < xmax and ymin < y < ymax

    def to_image(self, values) -> np.ndarray:
        """Reshape a length-K vector to an (ny, nx) image, row iy = y index."""
        return np.asarray(values).reshape(self.ny, self.nx)


def make_grid(nx: int, ny: int, pixel_size: float = 1.0) -> Grid:
    """Grid centered on the world origin."""
    if nx < 1 or ny < 1:
        raise ValueError(f"grid dimensions must be >= 1, got {nx}x{ny}")
    if not pixel_size > 0:
        raise ValueError(f"pixel_size must be > 0, got {pixel_size}")
    origin = (-0.5 * nx * pixel_size, -0.5 * ny * pixel_size)
    return Grid(int(nx), int(ny), float(pixel_size), origin)


class Ray(NamedTuple):
    """Oriented segment from the source side (a) to the detector side (b)."""

    point_a: tuple[float, float]
    point_b: tuple[float, float]


class Crossing(NamedTuple):
    pixel: int
    length: float


@dataclass(frozen=True)
class PinholePose:
    """Pinhole camera in the grid plane.

    The camera looks back at the grid center along ``-direction(angle_deg)``;
    light travels along ``+direction`` towards the pinhole, which sits at
    ``distance`` from the grid center.  ``focal`` is the pinhole-detector
    spacing; ``fov_deg`` defaults to the angle subtended by the grid's
    circumscribed disk (by its corners when the pinhole is inside that disk).
    """

    angle_deg: float
    distance: float
    focal: float = 1.0
    fov_deg: float | None = None

    def pinhole(self, grid: Grid) -> np.ndarray:
        t = np.deg2rad(self.angle_deg)
        cx, cy = grid.center
        return np.array([cx + self.distance * np.cos(t), cy + self.distance * np.sin(t)])


@dataclass(frozen=True, eq=False)
class ViewSet:
    """Collection geometry: ``n_views`` views of ``detector_pixels`` rays each.

    Ray ``k = v * detector_pixels + i`` is detector pixel ``i`` of view ``v``.
    ``ray_a``/``ray_b`` are (n_rays, 2) arrays of segment endpoints; ``ray_b``
    is the detector point.
    """

    kind: str
    angles_deg: np.ndarray
    detector_pixels: int
    ray_a: np.ndarray
    ray_b: np.ndarray
    poses: tuple = field(default=())

    def __post_init__(self):
        n = len(self.angles_deg) * self.detector_pixels
        if self.ray_a.shape != (n, 2) or self.ray_b.shape != (n, 2):
            raise ValueError("ray endpoint arrays do not match views x detector_pixels")
        if np.any(np.all(self.ray_a == self.ray_b, axis=1)):
            raise ValueError("degenerate ray: point_a == point_b")
        for arr in (self.angles_deg, self.ray_a, self.ray_b):
            arr.setflags(write=False)

    @property
    def n_views(self) -> int:
        return len(self.angles_deg)

    @property
    def n_rays(self) -> int:
        return self.n_views * self.detector_pixels

    def ray(self, k: int) -> Ray:
        return Ray(tuple(self.ray_a[k]), tuple(self.ray_b[k]))

    def view_rays(self, v: int) -> list[Ray]:
        lo = v * self.detector_pixels
        return [self.ray(k) for k in range(lo, lo + self.detector_pixels)]

    @classmethod
    def from_rays(cls, rays: Sequence[Sequence[Ray]], angles_deg=None) -> "ViewSet":
        """Build from explicit per-view ray lists (all views the same length)."""
        if not rays:
            raise ValueError("need at least one view")
        n_det = len(rays[0])
        if n_det < 1 or any(len(v) != n_det for v in rays):
            raise ValueError("all views need the same, nonzero, number of rays")
        flat = [r for v in rays for r in v]
        a = np.array([r[0] for r in flat], dtype=float)
        b = np.array([r[1] for r in flat], dtype=float)
        if angles_deg is None:
            angles_deg = np.full(len(rays), np.nan)
        return cls("explicit", np.asarray(angles_deg, dtype=float), n_det, a, b)


def _detector_offsets(n: int, half_width: float) -> np.ndarray:
    return half_width * (2.0 * (np.arange(n) + 0.5) / n - 1.0)


def parallel_views(
    grid: Grid, n_views: int, start_deg: float = 0.0, step_deg: float = 1.0, detector_pixels: int | None = None
) -> ViewSet:
    """Parallel-beam views; view ``v`` propagates along angle ``start + v*step``.

    Rays are evenly spaced across the circumscribed disk and run from one
    pixel beyond the disk on the source side to one pixel beyond on the
    detector side.
    """
    if detector_pixels is None:
        detector_pixels = max(grid.nx, grid.ny)
    if n_views < 1 or detector_pixels < 1:
        raise ValueError("n_views and detector_pixels must be >= 1")
    angles = start_deg + step_deg * np.arange(n_views, dtype=float)
    t = np.deg2rad(angles)
    u = np.stack([np.cos(t), np.sin(t)], axis=1)
    w = np.stack([-np.sin(t), np.cos(t)], axis=1)
    r = grid.radius
    half = r + grid.pixel_size
    offs = _detector_offsets(detector_pixels, r)
    c = np.asarray(grid.center)
    base = c + offs[None, :, None] * w[:, None, :]
    a = (base - half * u[:, None, :]).reshape(-1, 2)
    b = (base + half * u[:, None, :]).reshape(-1, 2)
    return ViewSet("parallel", angles, int(detector_pixels), a, b)


def pinhole_views(grid: Grid, poses: Sequence[PinholePose], detector_pixels: int | None = None) -> ViewSet:
    """Fan-beam views through a pinhole per pose.

    Detector pixel ``i`` is mirrored through the pinhole so that ray ``i``
    crosses the grid on the same side as ray ``i`` of ``parallel_views``
    at the same angle.
    """
    if detector_pixels is None:
        detector_pixels = max(grid.nx, grid.ny)
    if detector_pixels < 1 or not poses:
        raise ValueError("need detector_pixels >= 1 and at least one pose")
    xmin, xmax, ymin, ymax = grid.extent
    corners = np.array([[xmin, ymin], [xmax, ymin], [xmin, ymax], [xmax, ymax]])
    a_list, b_list = [], []
    for pose in poses:
        p = pose.pinhole(grid)
        if grid.contains(p, closed=True):
            raise ValueError(f"pinhole {tuple(p)} lies inside or on the grid")
        if pose.focal <= 0:
            raise ValueError("focal length must be > 0")
        t = np.deg2rad(pose.angle_deg)
        u = np.array([np.cos(t), np.sin(t)])
        w = np.array([-np.sin(t), np.cos(t)])
        if pose.fov_deg is None and pose.distance > grid.radius:
            # tangent to the circumscribed disk, like the parallel-beam span
            r = grid.radius
            tan_half = r / float(np.sqrt(pose.distance**2 - r**2))
        elif pose.fov_deg is None:
            rel = corners - p
            depth = -(rel @ u)
            if np.any(depth <= 0):
                raise ValueError("grid is not entirely in front of the pinhole; give fov_deg")
            tan_half = float(np.max(np.abs(rel @ w) / depth))
        else:
            tan_half = float(np.tan(np.deg2rad(0.5 * pose.fov_deg)))
        offs = _detector_offsets(detector_pixels, pose.focal * tan_half)
        det = p[None, :] + pose.focal * u[None, :] - offs[:, None] * w[None, :]
        d = p[None, :] - det
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        reach = pose.distance + grid.radius + grid.pixel_size
        a_list.append(p[None, :] + reach * d)
        b_list.append(det)
    angles = np.array([pose.angle_deg for pose in poses], dtype=float)
    return ViewSet(
        "pinhole", angles, int(detector_pixels), np.concatenate(a_list), np.concatenate(b_list), tuple(poses)
    )


def trace_segments(grid: Grid, point_a, point_b):
    """Trace many segments at once.

    Returns CSR-style ``(indptr, pixels, lengths)``; segment ``r`` occupies
    ``pixels[indptr[r]:indptr[r+1]]`` ordered from ``point_a`` to ``point_b``,
    lengths in pixel-size units.
    """
    pa = np.ascontiguousarray(np.atleast_2d(point_a), dtype=float)
    pb = np.ascontiguousarray(np.atleast_2d(point_b), dtype=float)
    x0, y0 = grid.origin
    return kernels.trace_batch(
        pa[:, 0].copy(), pa[:, 1].copy(), pb[:, 0].copy(), pb[:, 1].copy(),
        grid.nx, grid.ny, float(x0), float(y0), float(grid.pixel_size),
    )


def trace_ray(grid: Grid, ray: Ray) -> list[Crossing]:
    """Pixels crossed by ``ray`` in traversal order with exact chord lengths."""
    indptr, pix, length = trace_segments(grid, [ray[0]], [ray[1]])
    return [Crossing(int(p), float(l)) for p, l in zip(pix, length)]


def trace_between(grid: Grid, pixel_j: int, detector_point, exclude_source: bool = True) -> list[Crossing]:
    """Crossings on the segment from the center of ``pixel_j`` to ``detector_point``.

    With ``exclude_source`` the source pixel's own half-chord is dropped.
    """
    if not 0 <= pixel_j < grid.n_pixels:
        raise ValueError(f"pixel index {pixel_j} out of range [0, {grid.n_pixels})")
    start = grid.pixel_center(pixel_j)
    if np.allclose(start, detector_point, rtol=0, atol=0):
        return []
    out = trace_ray(grid, Ray(tuple(start), tuple(detector_point)))
    if exclude_source:
        out = [c for c in out if c.pixel != pixel_j]
    return out
