"""Total-brightness-per-view measurements and their inversion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .forward import EPSILON, ObjectState, forward
from .grid import Grid, ViewSet
from .metrics import support_mask
from .operators import NonlinearModel, SparseOperator, build_downsampler, build_nonlinear
from .solver import SolveResult, SolverConfig, make_problem, reconstruct

__all__ = [
    "Lightcurve",
    "lightcurve_forward",
    "lightcurve_reconstruct",
    "convex_hull_mask",
    "shape_estimate",
]


@dataclass(eq=False)
class Lightcurve:
    values: np.ndarray
    views: ViewSet

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.shape != (self.views.n_views,):
            raise ValueError(f"lightcurve has {self.values.size} values for {self.views.n_views} views")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("lightcurve values must be finite")


def lightcurve_forward(model: NonlinearModel, D: SparseOperator, x: ObjectState, epsilon: float = EPSILON) -> Lightcurve:
    if D.n_rows != model.views.n_views or D.n_cols != model.n_rows:
        raise ValueError(f"downsampler is {D.n_rows}x{D.n_cols}, expected {model.views.n_views}x{model.n_rows}")
    return Lightcurve(D.apply(forward(model, x, epsilon)), model.views)


def lightcurve_reconstruct(
    grid: Grid,
    views: ViewSet,
    lc: Lightcurve,
    config: SolverConfig | None = None,
    weighting: str = "binary",
    noise_sigma: float | None = None,
    x0=None,
    callback=None,
) -> SolveResult:
    """Fit (a, s) to a lightcurve with the downsampler installed."""
    config = config or SolverConfig()
    if lc.views.n_views != views.n_views:
        raise ValueError("lightcurve and view set disagree on the number of views")
    model = build_nonlinear(grid, views, weighting)
    D = build_downsampler(views)
    problem = make_problem(model, lc.values, config, noise_sigma=noise_sigma, downsampler=D)
    return reconstruct(problem, config, x0=x0, callback=callback)


def shape_estimate(result_or_s, rel_threshold: float = 0.5) -> np.ndarray:
    """Matter mask: pixels with s above ``rel_threshold`` times the peak."""
    s = result_or_s.x.s if isinstance(result_or_s, SolveResult) else result_or_s
    return support_mask(s, rel_threshold)


def convex_hull_mask(state: ObjectState, grid: Grid, threshold: float = 0.5) -> np.ndarray:
    """Pixels whose centers lie in the convex hull of the centers with a <= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    a = np.asarray(state.a, dtype=float)
    mask = np.zeros(grid.n_pixels, dtype=bool)
    idx = np.nonzero(a <= threshold)[0]
    if len(idx) == 0:
        return mask
    ix, iy = grid.pixel_coords(np.arange(grid.n_pixels))
    pts = np.stack([ix, iy], axis=1).astype(float)
    sel = pts[idx]
    tol = 1e-9
    centered = sel - sel.mean(axis=0)
    if len(sel) >= 3 and np.linalg.matrix_rank(centered, tol=tol) == 2:
        eq = ConvexHull(sel).equations
        return np.all(pts @ eq[:, :2].T + eq[:, 2] <= tol, axis=1)
    # point or segment: project onto the principal direction
    if np.allclose(centered, 0):
        mask[idx] = True
        return mask
    u = centered[np.argmax(np.abs(centered).sum(axis=1))]
    u = u / np.linalg.norm(u)
    rel = pts - sel.mean(axis=0)
    along = rel @ u
    off = np.abs(rel @ np.array([-u[1], u[0]]))
    proj = centered @ u
    return (off <= tol) & (along >= proj.min() - tol) & (along <= proj.max() + tol)
