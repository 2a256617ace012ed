"""Invariant checks on a small random instance (backs ``occtomo check``)."""
from __future__ import annotations

import os
import tempfile

import numpy as np

from .forward import (
    ObjectState,
    forward,
    forward_linear,
    jacobian_apply,
    jacobian_transpose_apply,
)
from .grid import make_grid, parallel_views
from .io import read_array, write_array
from .occlusion import render_occluded
from .operators import build_downsampler, build_nonlinear
from .phantoms import shape
from .solver import SolverConfig, make_problem, reconstruct

__all__ = ["run_checks"]


def _random_state(rng, K, lo=0.2):
    return ObjectState(rng.uniform(lo, 1.0, K), rng.uniform(lo, 1.0, K))


def run_checks(seed: int = 0, n: int = 8, n_views: int = 12):
    """Return ``[(name, passed, detail), ...]``."""
    rng = np.random.default_rng(seed)
    grid = make_grid(n, n)
    views = parallel_views(grid, n_views, 0.0, 360.0 / n_views, n)
    model = build_nonlinear(grid, views, "length")
    K = grid.n_pixels
    out = []

    x = _random_state(rng, K)
    v = rng.standard_normal(2 * K)
    w = rng.standard_normal(model.n_rows)
    lhs = jacobian_apply(model, x, v) @ w
    rhs = v @ jacobian_transpose_apply(model, x, w)
    err = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    out.append(("adjoint", err < 1e-10, f"relative mismatch {err:.2e}"))

    h = 1e-6
    fd = (forward(model, x.x + h * v) - forward(model, x.x - h * v)) / (2 * h)
    jv = jacobian_apply(model, x, v)
    err = np.max(np.abs(fd - jv)) / max(np.max(np.abs(jv)), 1e-300)
    out.append(("jacobian_fd", err < 1e-6, f"max relative error {err:.2e}"))

    b_sweep = forward(model, x)
    b_expl = forward(model.explicit(), x)
    err = np.max(np.abs(b_sweep - b_expl)) / np.max(np.abs(b_expl))
    out.append(("sweep_vs_explicit", err < 1e-12, f"max relative difference {err:.2e}"))

    s = rng.uniform(0.0, 1.0, K)
    b_air = forward(model, ObjectState(np.ones(K), np.maximum(s, 1e-9)))
    ps = forward_linear(model.P, np.maximum(s, 1e-9))
    err = np.linalg.norm(b_air - ps) / np.linalg.norm(ps)
    out.append(("transparent_reduction", err < 1e-12, f"relative error {err:.2e}"))

    bmodel = build_nonlinear(grid, views, "binary")
    xs = shape("square", grid)
    oracle = render_occluded(grid, views, xs.a, xs.s, weighting="binary").vector
    fwd = forward(bmodel, xs)
    err = np.max(np.abs(oracle - fwd) / np.maximum(np.abs(oracle), 1e-12))
    out.append(("oracle_equivalence", err < 1e-6, f"max relative error {err:.2e}"))

    D = build_downsampler(views)
    lc = D.apply(b_sweep)
    sums = b_sweep.reshape(views.n_views, views.detector_pixels).sum(axis=1)
    err = np.max(np.abs(lc - sums))
    out.append(("lightcurve_conservation", err < 1e-12, f"max difference {err:.2e}"))

    problem = make_problem(model, np.zeros(model.n_rows), SolverConfig(mu=1.0))
    res = reconstruct(problem, SolverConfig(mu=1.0, max_iter=100))
    target = np.concatenate([np.ones(K), np.full(K, problem.epsilon)])
    dist = np.max(np.abs(res.x.x - target))
    mono = bool(np.all(np.diff(res.objective_trace) <= 0))
    out.append(("zero_data_limit", dist < 1e-3 and mono, f"distance {dist:.2e} after {res.iterations} iterations"))

    m = rng.standard_normal((5, 7))
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.array")
        write_array(path, m)
        same = np.array_equal(read_array(path), m)
    out.append(("array_roundtrip", same, "bit-exact" if same else "mismatch"))
    return out
