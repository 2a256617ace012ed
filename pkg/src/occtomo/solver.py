"""Regularized, bound-constrained least squares for the occlusion model.

Minimizes ``||b - F(x)||^2 + mu ||x - x_air||^2`` subject to ``x >= eps``
and, by default, ``a <= 1`` with a projected limited-memory BFGS iteration.  By default the iteration
runs in ``z = log x``, where the bound becomes ``z >= log eps`` and the
``1/x`` factor of the Jacobian drops out.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .forward import (
    EPSILON,
    DomainError,
    ObjectState,
    forward,
    forward_terms,
    log_jacobian_transpose_apply,
)
from ._backend import kernels
from .operators import NonlinearModel, SparseOperator

__all__ = [
    "Problem",
    "SolverConfig",
    "SolveResult",
    "make_problem",
    "default_mu",
    "objective",
    "gradient",
    "initial_state",
    "reconstruct",
]

log = logging.getLogger(__name__)


@dataclass(eq=False)
class Problem:
    model: NonlinearModel
    data: np.ndarray
    mu: float = 0.0
    x_air: np.ndarray | None = None
    epsilon: float = EPSILON
    downsampler: SparseOperator | None = None
    noise_sigma: float | None = None

    def __post_init__(self):
        K = self.model.n_pixels
        self.data = np.asarray(self.data, dtype=float).ravel()
        n_out = self.model.n_rows if self.downsampler is None else self.downsampler.n_rows
        if self.downsampler is not None and self.downsampler.n_cols != self.model.n_rows:
            raise ValueError("downsampler columns must equal the model's detector rows")
        if self.data.shape != (n_out,):
            raise ValueError(f"data has length {self.data.size}, expected {n_out}")
        if self.x_air is None:
            self.x_air = np.concatenate([np.ones(K), np.zeros(K)])
        self.x_air = np.asarray(self.x_air, dtype=float)
        if self.x_air.shape != (2 * K,):
            raise ValueError("x_air must have length 2K")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")

    @property
    def n_pixels(self) -> int:
        return self.model.n_pixels


@dataclass
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 500
    mu: float | None = None
    epsilon: float = EPSILON
    log_reparam: bool = True
    seed: int = 0
    memory: int = 10
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    init_s: float | None = None
    init_jitter: float = 0.0
    # transmittance cannot exceed that of air; None drops the upper bound
    a_max: float | None = 1.0


@dataclass
class SolveResult:
    x: ObjectState
    objective_trace: list[float] = field(default_factory=list)
    grad_norm: float = np.inf
    iterations: int = 0
    status: str = "max_iter"


def default_mu(noise_sigma: float | None, n_measurements: int, n_pixels: int) -> float:
    """Ten times the expected per-unknown noise energy."""
    if not noise_sigma:
        return 0.0
    return 10.0 * noise_sigma**2 * n_measurements / (2 * n_pixels)


def make_problem(model, data, config: SolverConfig | None = None, noise_sigma=None, downsampler=None) -> Problem:
    config = config or SolverConfig()
    n_meas = np.asarray(data).size
    mu = config.mu if config.mu is not None else default_mu(noise_sigma, n_meas, model.n_pixels)
    return Problem(model, data, mu, None, config.epsilon, downsampler, noise_sigma)


class _Evaluator:
    """Objective and gradient sharing one forward sweep."""

    def __init__(self, problem: Problem):
        self.p = problem
        self.n_evals = 0

    def residual(self, x: np.ndarray):
        p = self.p
        if p.model.matrix_free:
            tau = forward_terms(p.model, x, p.epsilon)
            b = kernels.ray_sum(p.model.table.indptr, tau)
        else:
            tau = None
            b = forward(p.model, x, p.epsilon)
        if p.downsampler is not None:
            b = p.downsampler.apply(b)
        return p.data - b, tau

    def value(self, x: np.ndarray) -> float:
        self.n_evals += 1
        r, _ = self.residual(x)
        d = x - self.p.x_air
        return float(r @ r + self.p.mu * (d @ d))

    def value_and_log_grad(self, x: np.ndarray):
        """Objective and its gradient with respect to ``log x``."""
        self.n_evals += 1
        p = self.p
        r, tau = self.residual(x)
        w = -2.0 * (r if p.downsampler is None else p.downsampler.apply_transpose(r))
        g = log_jacobian_transpose_apply(p.model, x, w, p.epsilon, tau=tau)
        d = x - p.x_air
        f = float(r @ r + p.mu * (d @ d))
        g += 2.0 * p.mu * x * d
        return f, g


def _as_vector(problem: Problem, x) -> np.ndarray:
    xv = x.x if isinstance(x, ObjectState) else np.asarray(x, dtype=float)
    if xv.shape != (2 * problem.n_pixels,):
        raise ValueError(f"state has length {xv.size}, expected {2 * problem.n_pixels}")
    if np.any(xv < problem.epsilon) or not np.all(np.isfinite(xv)):
        raise DomainError("state violates the lower bound x >= epsilon")
    return xv


def objective(problem: Problem, x) -> float:
    return _Evaluator(problem).value(_as_vector(problem, x))


def gradient(problem: Problem, x) -> np.ndarray:
    """Gradient of the objective with respect to x (descent direction is -g)."""
    xv = _as_vector(problem, x)
    _, g = _Evaluator(problem).value_and_log_grad(xv)
    return g / xv


def initial_state(problem: Problem, config: SolverConfig | None = None) -> np.ndarray:
    """Transparent start with uniform mid-level brightness."""
    config = config or SolverConfig()
    K = problem.n_pixels
    eps = problem.epsilon
    if config.init_s is not None:
        s0 = config.init_s
    else:
        P = problem.model.P
        lin = P if problem.downsampler is None else None
        row_sums = (
            lin.apply(np.ones(K))
            if lin is not None
            else problem.downsampler.apply(P.apply(np.ones(K)))
        )
        peak = float(np.max(problem.data)) if problem.data.size else 0.0
        denom = float(np.max(row_sums)) if row_sums.size else 0.0
        s0 = 0.5 * peak / denom if denom > 0 and peak > 0 else 1.0
    x0 = np.concatenate([np.ones(K), np.full(K, max(s0, eps))])
    if config.init_jitter > 0:
        rng = np.random.default_rng(config.seed)
        x0 *= np.exp(config.init_jitter * rng.standard_normal(2 * K))
    return np.maximum(x0, eps)


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(list(zip(S, Y, (1.0 / (y @ s) for s, y in zip(S, Y))))):
        a = rho * (s @ q)
        q -= a * y
        alphas.append((a, rho, s, y))
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for a, rho, s, y in reversed(alphas):
        beta = rho * (y @ q)
        q += (a - beta) * s
    return q


def reconstruct(problem: Problem, config: SolverConfig | None = None, x0=None, callback=None) -> SolveResult:
    """Projected L-BFGS with backtracking on the projection arc.

    Stops when the infinity norm of the projected gradient step is at most
    ``tol * (1 + |f|)``, after ``max_iter`` iterations, or when no step gives
    sufficient decrease (best iterate returned).
    """
    config = config or SolverConfig()
    ev = _Evaluator(problem)
    eps = problem.epsilon
    x = initial_state(problem, config) if x0 is None else np.maximum(_as_vector_loose(problem, x0), eps)
    use_log = config.log_reparam

    K = problem.n_pixels
    upper = np.full(2 * K, np.inf)
    if config.a_max is not None:
        if config.a_max < eps:
            raise ValueError("a_max must be >= epsilon")
        upper[:K] = config.a_max
    if use_log:
        lower = np.log(eps)
        upper = np.log(upper)
        to_x = np.exp
        z = np.log(x)
    else:
        lower = eps
        to_x = lambda v: v  # noqa: E731
        z = x.copy()

    def project(v):
        return np.minimum(np.maximum(v, lower), upper)

    def evaluate(v):
        xv = np.maximum(to_x(v), eps)
        f, gl = ev.value_and_log_grad(xv)
        return xv, f, (gl if use_log else gl / xv)

    z = project(z)
    x, f, g = evaluate(z)
    trace = [f]
    S: deque = deque(maxlen=config.memory)
    Y: deque = deque(maxlen=config.memory)
    status = "max_iter"
    it = 0
    pg_norm = float(np.max(np.abs(project(z - g) - z))) if z.size else 0.0

    if f == 0.0 and problem.mu == 0.0:
        return SolveResult(ObjectState.from_vector(x), trace, pg_norm, 0, "converged")

    for it in range(1, config.max_iter + 1):
        if pg_norm <= config.tol * (1.0 + abs(f)):
            status = "converged"
            it -= 1
            break
        free = ~(((z <= lower) & (g > 0)) | ((z >= upper) & (g < 0)))
        d = -_two_loop(g * free, S, Y) * free
        gd = g @ d
        if not gd < 0:
            S.clear()
            Y.clear()
            d = -g * free
            gd = g @ d
        step = 1.0 if S else min(1.0, 1.0 / max(np.max(np.abs(d)), 1e-300))
        accepted = False
        for attempt in range(2):
            t = step
            for _ in range(config.max_backtracks):
                z_new = project(z + t * d)
                dz = z_new - z
                decrease = g @ dz
                if decrease < 0:
                    x_new, f_new, g_new = evaluate(z_new)
                    if f_new <= f + config.c1 * decrease:
                        accepted = True
                        break
                t *= config.backtrack
            if accepted or attempt == 1:
                break
            # retry along projected steepest descent with fresh memory
            S.clear()
            Y.clear()
            d = -g * free
            step = min(1.0, 1.0 / max(np.max(np.abs(d)), 1e-300))
        if not accepted:
            status = "line_search_failure"
            break
        s_vec = z_new - z
        y_vec = g_new - g
        sy = s_vec @ y_vec
        if sy > 1e-12 * (y_vec @ y_vec):
            S.append(s_vec)
            Y.append(y_vec)
        z, x, f, g = z_new, x_new, f_new, g_new
        trace.append(f)
        pg_norm = float(np.max(np.abs(project(z - g) - z)))
        if callback is not None:
            callback(it, x, f)
        if f == 0.0 and problem.mu == 0.0:
            status = "converged"
            break
    else:
        it = config.max_iter
        if pg_norm <= config.tol * (1.0 + abs(f)):
            status = "converged"

    log.debug("solver stopped: %s after %d iterations, f=%.6g", status, it, f)
    return SolveResult(ObjectState.from_vector(x), trace, pg_norm, it, status)


def _as_vector_loose(problem: Problem, x0) -> np.ndarray:
    xv = x0.x if isinstance(x0, ObjectState) else np.asarray(x0, dtype=float)
    if xv.shape != (2 * problem.n_pixels,):
        raise ValueError(f"x0 has length {xv.size}, expected {2 * problem.n_pixels}")
    return xv
