"""Sparse operators: linear projection P, the C/E factors of the occlusion
model, and the per-view downsampler D."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .grid import Grid, ViewSet, trace_segments

__all__ = [
    "SparseOperator",
    "NonlinearModel",
    "RayTable",
    "trace_views",
    "build_projection",
    "build_nonlinear",
    "build_downsampler",
    "apply",
    "apply_transpose",
]

WEIGHTINGS = ("length", "binary")
PATHS = ("ray", "center")


class SparseOperator:
    """Coordinate-format linear operator with a lazily built CSR index.

    Entries must be unique per (row, col).  ``apply_transpose`` uses the CSR
    index transposed in place; no transposed copy is stored.
    """

    def __init__(self, n_rows, n_cols, rows, cols, values, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("operator shape must be non-negative")
        if not (len(self.rows) == len(self.cols) == len(self.values)):
            raise ValueError("rows, cols and values must have equal length")
        if check and len(self.rows):
            if self.rows.min() < 0 or self.rows.max() >= self.n_rows:
                raise ValueError("row index out of range")
            if self.cols.min() < 0 or self.cols.max() >= self.n_cols:
                raise ValueError("column index out of range")
            key = self.rows * max(self.n_cols, 1) + self.cols
            if len(np.unique(key)) != len(key):
                raise ValueError("duplicate (row, col) entries")

    @classmethod
    def from_csr(cls, m) -> "SparseOperator":
        m = sp.csr_matrix(m)
        coo = m.tocoo()
        op = cls(m.shape[0], m.shape[1], coo.row, coo.col, coo.data, check=False)
        op.__dict__["csr"] = m
        return op

    @classmethod
    def identity(cls, n: int) -> "SparseOperator":
        i = np.arange(n)
        return cls(n, n, i, i, np.ones(n))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        # stable sort keeps entry order within a row
        order = np.argsort(self.rows, kind="stable")
        indptr = np.zeros(self.n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.rows, minlength=self.n_rows), out=indptr[1:])
        return sp.csr_matrix(
            (self.values[order], self.cols[order], indptr), shape=self.shape
        )

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_cols,):
            raise ValueError(f"expected vector of length {self.n_cols}, got shape {v.shape}")
        return self.csr @ v

    def apply_transpose(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_rows,):
            raise ValueError(f"expected vector of length {self.n_rows}, got shape {w.shape}")
        return self.csr.T @ w

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def __repr__(self):
        return f"SparseOperator({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def apply(op: SparseOperator, v) -> np.ndarray:
    return op.apply(v)


def apply_transpose(op: SparseOperator, w) -> np.ndarray:
    return op.apply_transpose(w)


@dataclass(frozen=True, eq=False)
class RayTable:
    """Per-ray crossings, CSR style, ordered source end -> detector end.

    ``weight`` is the projection weight of each crossing and ``expo`` the
    exponent its pixel contributes to the attenuation of crossings upstream
    of it.  ``own`` is the self-attenuation exponent of the emitting pixel
    (zero when the source pixel is excluded from its own path).
    """

    indptr: np.ndarray
    pixels: np.ndarray
    lengths: np.ndarray
    weight: np.ndarray
    expo: np.ndarray
    own: np.ndarray

    @property
    def n_rays(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return len(self.pixels)

    @cached_property
    def ray_of_entry(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_rays), np.diff(self.indptr))


def trace_views(grid: Grid, views: ViewSet, weighting: str = "length", exclude_source: bool = True) -> RayTable:
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    indptr, pix, lens = trace_segments(grid, views.ray_a, views.ray_b)
    if weighting == "length":
        weight = lens
        own = np.zeros_like(lens) if exclude_source else 0.5 * lens
    else:
        weight = np.ones_like(lens)
        own = np.zeros_like(lens) if exclude_source else np.ones_like(lens)
    return RayTable(indptr, pix, lens, weight, weight.copy(), own)


def build_projection(grid: Grid, views: ViewSet, weighting: str = "length") -> SparseOperator:
    """P with rows = rays (view-major) and columns = pixels."""
    table = trace_views(grid, views, weighting)
    return _projection_from_table(table, grid.n_pixels)


def _projection_from_table(table: RayTable, n_pixels: int) -> SparseOperator:
    return SparseOperator(
        table.n_rays, n_pixels, table.ray_of_entry, table.pixels, table.weight, check=False
    )


@dataclass(eq=False)
class NonlinearModel:
    """Occlusion forward model ``b = C exp(E log x)`` on ``x = (a; s)``.

    One term per nonzero (ray k, pixel j) of P.  With ``path="ray"`` the
    attenuation path of term (k, j) is the remainder of ray k downstream of
    pixel j, so the model is evaluated by per-ray sweeps and E is only
    materialized on request.  ``path="center"`` traces from the center of j
    to the detector point of ray k and always evaluates through explicit
    C and E.

    E has ~nnz(P) * (mean crossings per ray) / 2 entries: about 2.5e7 for a
    50x50 grid with 360 x 50 rays, i.e. ~300 MB as CSR.  The sweep path
    needs only O(nnz(P)).
    """

    grid: Grid
    views: ViewSet
    table: RayTable
    weighting: str = "length"
    exclude_source: bool = True
    path: str = "ray"
    matrix_free: bool = True
    _E: SparseOperator | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.path != "ray" and self.matrix_free:
            raise ValueError("matrix-free evaluation needs path='ray'")

    @property
    def n_pixels(self) -> int:
        return self.grid.n_pixels

    @property
    def n_terms(self) -> int:
        return self.table.nnz

    @property
    def n_rows(self) -> int:
        return self.table.n_rays

    def explicit(self) -> "NonlinearModel":
        """Same model evaluated through explicit C and E."""
        return replace(self, matrix_free=False, _E=self._E)

    @cached_property
    def term_index(self) -> np.ndarray:
        """(n_terms, 2) array: term row -> (detector row k, source pixel j)."""
        return np.stack([self.table.ray_of_entry, self.table.pixels], axis=1)

    @cached_property
    def P(self) -> SparseOperator:
        return _projection_from_table(self.table, self.n_pixels)

    @cached_property
    def C(self) -> SparseOperator:
        t = self.table
        return SparseOperator(self.n_rows, self.n_terms, t.ray_of_entry, np.arange(t.nnz), t.weight, check=False)

    @property
    def E(self) -> SparseOperator:
        if self._E is None:
            self._E = _build_E(self)
        return self._E


def _build_E(model: NonlinearModel) -> SparseOperator:
    t = model.table
    K = model.n_pixels
    rows, cols, vals = [], [], []
    if model.path == "ray":
        for k in range(t.n_rays):
            lo, hi = int(t.indptr[k]), int(t.indptr[k + 1])
            n = hi - lo
            if n == 0:
                continue
            # term m gets every crossing strictly downstream of it
            mm, qq = np.triu_indices(n, k=1)
            rows.append(lo + mm)
            cols.append(t.pixels[lo + qq])
            vals.append(t.expo[lo + qq])
        own = t.own != 0
        rows.append(np.nonzero(own)[0])
        cols.append(t.pixels[own])
        vals.append(t.own[own])
    else:
        centers = model.grid.pixel_centers()[t.pixels]
        det = model.views.ray_b[t.ray_of_entry]
        indptr, pix, lens = trace_segments(model.grid, centers, det)
        counts = np.diff(indptr)
        term = np.repeat(np.arange(t.nnz), counts)
        is_src = pix == t.pixels[term]
        if model.weighting == "binary":
            lens = np.ones_like(lens)
        keep = ~is_src if model.exclude_source else np.ones_like(is_src)
        rows.append(term[keep])
        cols.append(pix[keep])
        vals.append(lens[keep])
    term = np.arange(t.nnz)
    rows.append(term)
    cols.append(K + t.pixels)
    vals.append(np.ones(t.nnz))
    return SparseOperator(
        t.nnz, 2 * K, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), check=False
    )


def build_nonlinear(
    grid: Grid,
    views: ViewSet,
    weighting: str = "length",
    exclude_source: bool = True,
    path: str = "ray",
    matrix_free: bool | None = None,
) -> NonlinearModel:
    """Term structure of the occlusion model.

    ``matrix_free`` defaults to True for ``path="ray"``; set it False to
    evaluate through the explicit E.
    """
    if path not in PATHS:
        raise ValueError(f"path must be one of {PATHS}, got {path!r}")
    if matrix_free is None:
        matrix_free = path == "ray"
    table = trace_views(grid, views, weighting, exclude_source)
    return NonlinearModel(grid, views, table, weighting, exclude_source, path, matrix_free)


def build_downsampler(views: ViewSet) -> SparseOperator:
    """D summing each view's detector rows into one lightcurve sample."""
    n = views.n_rays
    cols = np.arange(n)
    return SparseOperator(views.n_views, n, cols // views.detector_pixels, cols, np.ones(n), check=False)
