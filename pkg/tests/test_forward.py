import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box

from occtomo.forward import (
    DomainError,
    ObjectState,
    SlantStack,
    forward,
    forward_linear,
    forward_terms,
    jacobian_apply,
    jacobian_dense,
    jacobian_transpose_apply,
    log_jacobian_transpose_apply,
)
from occtomo.grid import Ray, ViewSet, make_grid, parallel_views
from occtomo.operators import build_nonlinear, build_projection
from occtomo.phantoms import five_circles

EPS = 1e-9


def random_state(rng, K, lo=0.05, hi=1.0):
    return ObjectState(rng.uniform(lo, hi, K), rng.uniform(lo, hi, K))


def polynomial_oracle(grid, views, x, weighting="length"):
    """sum_j w_kj s_j prod_i a_i^l over pixels downstream of j on ray k.

    Chords come from clipping each ray against every pixel box and are
    ordered by the ray parameter of the chord midpoint.
    """
    x0, y0 = grid.origin
    h = grid.pixel_size
    out = np.zeros(views.n_rays)
    for k in range(views.n_rays):
        p, q = views.ray_a[k], views.ray_b[k]
        seg = LineString([p, q])
        d = q - p
        chords = []
        for j in range(grid.n_pixels):
            ix, iy = j % grid.nx, j // grid.nx
            piece = seg.intersection(box(x0 + ix * h, y0 + iy * h, x0 + (ix + 1) * h, y0 + (iy + 1) * h))
            if piece.length > 1e-12:
                mid = np.asarray(piece.interpolate(0.5, normalized=True).coords[0])
                t = (mid - p) @ d / (d @ d)
                chords.append((t, j, piece.length / h))
        chords.sort()
        for m, (_, j, L) in enumerate(chords):
            w = L if weighting == "length" else 1.0
            e = 1.0 if weighting == "binary" else None
            term = w * x.s[j]
            for _, i, Li in chords[m + 1:]:
                term *= x.a[i] ** (Li if e is None else e)
            out[k] += term
    return out


@pytest.fixture
def small(rng):
    g = make_grid(5, 4)
    v = parallel_views(g, 7, 3.0, 29.0, 6)
    return g, v, build_nonlinear(g, v)


# ---------------------------------------------------------------- forward


@pytest.mark.parametrize("weighting", ["length", "binary"])
def test_transparent_equals_linear(rng, weighting, backend):
    g = make_grid(16, 16)
    v = parallel_views(g, 30, 0, 12, 16)
    m = build_nonlinear(g, v, weighting)
    P = build_projection(g, v, weighting)
    for _ in range(5):
        s = rng.uniform(EPS, 2.0, g.n_pixels)
        b = forward(m, ObjectState(np.ones(g.n_pixels), s))
        ref = forward_linear(P, s)
        assert np.linalg.norm(b - ref) / np.linalg.norm(ref) < 1e-12


@pytest.mark.parametrize("weighting", ["length", "binary"])
def test_polynomial_oracle_3x3(rng, weighting, backend):
    g = make_grid(3, 3)
    v = parallel_views(g, 8, 7.0, 45.0, 4)
    m = build_nonlinear(g, v, weighting)
    for _ in range(3):
        x = random_state(rng, 9, 0.1, 1.0)
        ref = polynomial_oracle(g, v, x, weighting)
        np.testing.assert_allclose(forward(m, x), ref, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(forward(m.explicit(), x), ref, rtol=1e-13, atol=1e-15)


def test_single_source_transmission(rng, backend):
    g = make_grid(6, 6)
    v = parallel_views(g, 12, 0, 30, 6)
    m = build_nonlinear(g, v)
    j = g.flat_index(2, 3)
    P = build_projection(g, v)
    rows = np.nonzero(P.toarray()[:, j])[0]
    # log b_k is affine in log a with the downstream chord lengths as coefficients
    E = m.E.toarray()
    for _ in range(4):
        a = rng.uniform(0.05, 1.0, g.n_pixels)
        s = np.full(g.n_pixels, EPS)
        s[j] = 1.0
        b = forward(m, ObjectState(a, s))
        for k in rows:
            t = int(np.nonzero((m.term_index[:, 0] == k) & (m.term_index[:, 1] == j))[0][0])
            pred = np.log(P.toarray()[k, j]) + E[t, :g.n_pixels] @ np.log(a)
            # other pixels emit eps-level light; compare at that scale
            assert abs(np.log(b[k]) - pred) < 1e-6


def test_forward_nonnegative_and_finite(rng, small, backend):
    g, v, m = small
    b = forward(m, random_state(rng, g.n_pixels, EPS, 3.0))
    assert np.all(np.isfinite(b)) and np.all(b >= 0)


@pytest.mark.parametrize("bad", [0.0, -1.0, 1e-12, np.nan])
def test_domain_violation_raises(rng, small, bad):
    g, v, m = small
    x = random_state(rng, g.n_pixels).x
    x[3] = bad
    with pytest.raises(DomainError):
        forward(m, x)


def test_pixel_count_mismatch(small):
    g, v, m = small
    with pytest.raises(ValueError):
        forward(m, ObjectState(np.ones(3), np.ones(3)))


def test_sweep_matches_explicit(rng, backend):
    g = make_grid(9, 7)
    v = parallel_views(g, 20, 1.0, 17.0, 9)
    m = build_nonlinear(g, v)
    x = random_state(rng, g.n_pixels)
    np.testing.assert_allclose(forward(m, x), forward(m.explicit(), x), rtol=1e-13)
    np.testing.assert_allclose(forward_terms(m, x), forward_terms(m.explicit(), x), rtol=1e-13)


def test_term_permutation_invariance(rng, small):
    g, v, m = small
    x = random_state(rng, g.n_pixels)
    perm = rng.permutation(m.n_terms)
    C = m.C.toarray()[:, perm]
    E = m.E.toarray()[perm]
    b = C @ np.exp(E @ np.log(x.x))
    np.testing.assert_allclose(b, forward(m, x), rtol=1e-13)


# ---------------------------------------------------------------- linear


def test_linear_zero():
    g = make_grid(4, 4)
    P = build_projection(g, parallel_views(g, 3))
    np.testing.assert_array_equal(forward_linear(P, np.zeros(16)), 0.0)


def test_linear_unit_source_is_column():
    g = make_grid(4, 4)
    P = build_projection(g, parallel_views(g, 5, 0, 33))
    e = np.zeros(16)
    e[6] = 1.0
    np.testing.assert_array_equal(forward_linear(P, e), P.toarray()[:, 6])


def test_five_circles_linear_peak():
    # the linear slant stack of the five-disk scene peaks near 25 chord units
    g = make_grid(50, 50)
    v = parallel_views(g, 360, 0, 1, 50)
    b = forward_linear(build_projection(g, v), five_circles(g).s)
    assert 22.5 <= b.max() <= 27.5


# ---------------------------------------------------------------- Jacobian


def test_jacobian_at_ones(rng, small, backend):
    g, v, m = small
    x = np.ones(2 * g.n_pixels)
    vec = rng.standard_normal(2 * g.n_pixels)
    np.testing.assert_allclose(jacobian_apply(m, x, vec), m.C.apply(m.E.apply(vec)), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("weighting", ["length", "binary"])
def test_jacobian_finite_differences(rng, weighting, backend):
    g = make_grid(8, 8)
    v = parallel_views(g, 12, 0, 30, 8)
    m = build_nonlinear(g, v, weighting)
    h = 1e-6
    for _ in range(10):
        x = random_state(rng, g.n_pixels, 0.2, 1.0).x
        d = rng.standard_normal(2 * g.n_pixels)
        fd = (forward(m, x + h * d) - forward(m, x - h * d)) / (2 * h)
        jv = jacobian_apply(m, x, d)
        assert np.max(np.abs(fd - jv)) / np.max(np.abs(jv)) < 1e-6


@pytest.mark.parametrize("matrix_free", [True, False])
def test_adjoint_pair(rng, small, matrix_free, backend):
    g, v, m = small
    m = m if matrix_free else m.explicit()
    x = random_state(rng, g.n_pixels)
    d = rng.standard_normal(2 * g.n_pixels)
    w = rng.standard_normal(m.n_rows)
    lhs = jacobian_apply(m, x, d) @ w
    rhs = d @ jacobian_transpose_apply(m, x, w)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_log_transpose_is_scaled(rng, small, backend):
    g, v, m = small
    x = random_state(rng, g.n_pixels)
    w = rng.standard_normal(m.n_rows)
    np.testing.assert_allclose(
        log_jacobian_transpose_apply(m, x, w), x.x * jacobian_transpose_apply(m, x, w), rtol=1e-13
    )


def test_dense_single_pixel():
    g = make_grid(1, 1)
    m = build_nonlinear(g, ViewSet.from_rays([[Ray((-1.0, 0.0), (1.0, 0.0))]]))
    np.testing.assert_allclose(jacobian_dense(m, [0.3, 0.7]), [[0.0, 1.0]])


def test_dense_two_pixel_strip():
    # detector on the pixel-0 side: b = s0 + a0 * s1
    g = make_grid(2, 1)
    m = build_nonlinear(g, ViewSet.from_rays([[Ray((2.0, 0.0), (-2.0, 0.0))]]))
    a0, a1, s0, s1 = 0.4, 0.8, 0.3, 0.9
    J = jacobian_dense(m, [a0, a1, s0, s1])
    np.testing.assert_allclose(J, [[s1, 0.0, 1.0, a0]], rtol=1e-14)
    # the pixel-1 term alone contributes [s1, 0, 0, a0]
    t = int(np.nonzero(m.term_index[:, 1] == 1)[0][0])
    Jt = (m.E.toarray()[t] * np.exp(m.E.toarray()[t] @ np.log([a0, a1, s0, s1]))) / np.array([a0, a1, s0, s1])
    np.testing.assert_allclose(Jt, [s1, 0.0, 0.0, a0], rtol=1e-14)


def test_dense_matches_products(rng, small, backend):
    g, v, m = small
    x = random_state(rng, g.n_pixels)
    J = jacobian_dense(m, x)
    I = np.eye(2 * g.n_pixels)
    cols = np.stack([jacobian_apply(m, x, I[i]) for i in range(2 * g.n_pixels)], axis=1)
    np.testing.assert_allclose(cols, J, rtol=1e-14, atol=1e-14)


def test_dense_guard():
    g = make_grid(50, 50)
    m = build_nonlinear(g, parallel_views(g, 360, 0, 1, 50))
    with pytest.raises(ValueError):
        jacobian_dense(m, np.ones(5000))


def test_direction_length_checked(small):
    g, v, m = small
    with pytest.raises(ValueError):
        jacobian_apply(m, np.ones(2 * g.n_pixels), np.ones(3))
    with pytest.raises(ValueError):
        jacobian_transpose_apply(m, np.ones(2 * g.n_pixels), np.ones(3))


# ---------------------------------------------------------------- properties


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 15), st.floats(0.05, 0.95))
def test_monotonicity(seed, i, factor):
    g = make_grid(4, 4)
    m = build_nonlinear(g, parallel_views(g, 6, 5.0, 31.0, 4))
    rng = np.random.default_rng(seed)
    x = random_state(rng, 16, 0.1, 1.0)
    b = forward(m, x)
    a2 = x.a.copy()
    a2[i] *= factor
    assert np.all(forward(m, ObjectState(a2, x.s)) <= b + 1e-15)
    s2 = x.s.copy()
    s2[i] /= factor
    assert np.all(forward(m, ObjectState(x.a, s2)) >= b - 1e-15)


# ---------------------------------------------------------------- containers


def test_state_vector_layout():
    x = ObjectState([1.0, 2.0], [3.0, 4.0])
    np.testing.assert_array_equal(x.x, [1, 2, 3, 4])
    y = ObjectState.from_vector(x.x)
    np.testing.assert_array_equal(y.a, x.a)
    with pytest.raises(ValueError):
        ObjectState.from_vector(np.ones(3))
    with pytest.raises(ValueError):
        ObjectState([1.0], [1.0, 2.0])


def test_slant_stack_shape():
    g = make_grid(3, 3)
    v = parallel_views(g, 4, 0, 10, 3)
    s = SlantStack(np.arange(12.0), v)
    assert s.data.shape == (4, 3)
    np.testing.assert_array_equal(s.vector, np.arange(12.0))
    with pytest.raises(ValueError):
        SlantStack(np.array([1.0, np.inf]).reshape(1, 2))
