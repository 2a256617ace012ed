"""Forward model evaluation and Jacobian products.

For ``x = (a; s)`` the detector reading of ray k is

    b_k = sum_j P_kj * s_j * prod_i a_i ** l_kji

where the product runs over the attenuation path of term (k, j).  The
Jacobian is ``J = C diag(exp(E log x)) E diag(1/x)``; products with J and
J^T are computed without forming it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .grid import ViewSet
from .operators import NonlinearModel, SparseOperator

__all__ = [
    "EPSILON",
    "DomainError",
    "ObjectState",
    "SlantStack",
    "forward",
    "forward_terms",
    "forward_linear",
    "jacobian_apply",
    "jacobian_transpose_apply",
    "jacobian_dense",
    "log_jacobian_transpose_apply",
]

EPSILON = 1e-9
DENSE_LIMIT = 10**7


class DomainError(ValueError):
    """State outside the box constraint ``x >= eps``."""


@dataclass(frozen=True, eq=False)
class ObjectState:
    """Per-pixel attenuation factors ``a`` and brightnesses ``s``."""

    a: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        s = np.asarray(self.s, dtype=float).ravel()
        if a.shape != s.shape:
            raise ValueError(f"a and s lengths differ: {a.shape} vs {s.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "s", s)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.a, self.s])

    @property
    def n_pixels(self) -> int:
        return len(self.a)

    @classmethod
    def from_vector(cls, x) -> "ObjectState":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or len(x) % 2:
            raise ValueError("state vector must be 1-D with even length")
        k = len(x) // 2
        return cls(x[:k].copy(), x[k:].copy())

    def check(self, eps: float = EPSILON) -> "ObjectState":
        for name, v in (("a", self.a), ("s", self.s)):
            if not np.all(np.isfinite(v)):
                raise DomainError(f"{name} has non-finite entries")
            if np.any(v < eps):
                i = int(np.argmin(v))
                raise DomainError(f"{name}[{i}] = {v[i]:.3g} below lower bound {eps:g}")
        return self


@dataclass(frozen=True, eq=False)
class SlantStack:
    """Detector data, one row per view; ``vector`` flattens view-major."""

    data: np.ndarray
    views: ViewSet | None = None
    noise_sigma: float | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if self.views is not None:
            d = d.reshape(self.views.n_views, self.views.detector_pixels)
        if d.ndim != 2:
            raise ValueError("slant stack data must be 2-D (views x detector pixels)")
        if not np.all(np.isfinite(d)):
            raise ValueError("slant stack has non-finite entries")
        object.__setattr__(self, "data", d)

    @property
    def vector(self) -> np.ndarray:
        return self.data.ravel()


def _as_state(model: NonlinearModel, x, eps: float) -> ObjectState:
    state = x if isinstance(x, ObjectState) else ObjectState.from_vector(x)
    if state.n_pixels != model.n_pixels:
        raise ValueError(f"state has {state.n_pixels} pixels, model has {model.n_pixels}")
    return state.check(eps)


def _explicit_exp(model: NonlinearModel, st: ObjectState) -> np.ndarray:
    return np.exp(model.E.apply(np.log(st.x)))


def forward_terms(model: NonlinearModel, x, eps: float = EPSILON) -> np.ndarray:
    """Per-term values ``C_kt * exp(E_t . log x)`` in term-row order."""
    st = _as_state(model, x, eps)
    t = model.table
    if model.matrix_free:
        return kernels.ray_tau(t.indptr, t.pixels, t.weight, t.expo, t.own, np.log(st.a), np.log(st.s))
    return t.weight * _explicit_exp(model, st)


def forward(model: NonlinearModel, x, eps: float = EPSILON) -> np.ndarray:
    """Detector vector ``b = C exp(E log x)``."""
    st = _as_state(model, x, eps)
    if model.matrix_free:
        return kernels.ray_sum(model.table.indptr, forward_terms(model, st, eps))
    return model.C.apply(_explicit_exp(model, st))


def forward_linear(P: SparseOperator, s) -> np.ndarray:
    return P.apply(s)


def jacobian_apply(model: NonlinearModel, x, v, eps: float = EPSILON, tau=None) -> np.ndarray:
    st = _as_state(model, x, eps)
    v = np.asarray(v, dtype=float)
    K = model.n_pixels
    if v.shape != (2 * K,):
        raise ValueError(f"expected direction of length {2 * K}, got {v.shape}")
    ra = v[:K] / st.a
    rs = v[K:] / st.s
    t = model.table
    if model.matrix_free:
        if tau is None:
            tau = forward_terms(model, st, eps)
        return kernels.ray_jvp(t.indptr, t.pixels, t.expo, t.own, tau, ra, rs)
    return model.C.apply(_explicit_exp(model, st) * model.E.apply(np.concatenate([ra, rs])))


def log_jacobian_transpose_apply(model: NonlinearModel, x, w, eps: float = EPSILON, tau=None) -> np.ndarray:
    """``diag(x) J^T w``: the transpose product with respect to ``log x``."""
    st = _as_state(model, x, eps)
    w = np.asarray(w, dtype=float)
    if w.shape != (model.n_rows,):
        raise ValueError(f"expected vector of length {model.n_rows}, got {w.shape}")
    t = model.table
    if not model.matrix_free:
        return model.E.apply_transpose(_explicit_exp(model, st) * model.C.apply_transpose(w))
    if tau is None:
        tau = forward_terms(model, st, eps)
    ga, gs = kernels.ray_vjp(t.indptr, t.pixels, t.expo, t.own, tau, w, model.n_pixels)
    return np.concatenate([ga, gs])


def jacobian_transpose_apply(model: NonlinearModel, x, w, eps: float = EPSILON, tau=None) -> np.ndarray:
    st = _as_state(model, x, eps)
    return log_jacobian_transpose_apply(model, st, w, eps, tau) / st.x


def jacobian_dense(model: NonlinearModel, x, eps: float = EPSILON) -> np.ndarray:
    """Explicit J from its factors; for small problems and tests only."""
    st = _as_state(model, x, eps)
    n = model.n_rows * 2 * model.n_pixels
    if n > DENSE_LIMIT:
        raise ValueError(f"dense Jacobian would have {n} entries (limit {DENSE_LIMIT})")
    xv = st.x
    e = np.exp(model.E.apply(np.log(xv)))
    C = model.C.toarray()
    E = model.E.toarray()
    return C @ (e[:, None] * E) / xv[None, :]
