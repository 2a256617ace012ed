import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box

from occtomo.grid import (
    Grid,
    PinholePose,
    Ray,
    ViewSet,
    make_grid,
    parallel_views,
    pinhole_views,
    trace_between,
    trace_ray,
    trace_segments,
)


def clipped_length(grid, p, q):
    xmin, xmax, ymin, ymax = grid.extent
    return LineString([p, q]).intersection(box(xmin, ymin, xmax, ymax)).length


def pixel_lengths(grid, p, q):
    """Per-pixel chord lengths by polygon clipping against every pixel box."""
    seg = LineString([p, q])
    x0, y0 = grid.origin
    h = grid.pixel_size
    out = {}
    for j in range(grid.n_pixels):
        ix, iy = j % grid.nx, j // grid.nx
        L = seg.intersection(box(x0 + ix * h, y0 + iy * h, x0 + (ix + 1) * h, y0 + (iy + 1) * h)).length
        if L > 1e-12:
            out[j] = L / h
    return out


# ---------------------------------------------------------------- make_grid


def test_full_size_grid():
    g = make_grid(50, 50, 1.0)
    assert g.n_pixels == 2500
    assert g.extent == (-25.0, 25.0, -25.0, 25.0)


def test_single_pixel_grid():
    g = make_grid(1, 1, 1.0)
    assert g.n_pixels == 1
    assert g.flat_index(0, 0) == 0
    np.testing.assert_allclose(g.pixel_center(0), [0.0, 0.0])


def test_small_grid_hand_geometry():
    g = make_grid(3, 2, 0.5)
    assert g.n_pixels == 6
    assert g.extent == (-0.75, 0.75, -0.5, 0.5)
    # flat index iy*nx + ix
    np.testing.assert_allclose(g.pixel_center(0), [-0.5, -0.25])
    np.testing.assert_allclose(g.pixel_center(2), [0.5, -0.25])
    np.testing.assert_allclose(g.pixel_center(4), [0.0, 0.25])
    assert g.radius == pytest.approx(0.25 * np.hypot(3, 2))


@pytest.mark.parametrize("nx,ny,h", [(0, 3, 1.0), (3, -1, 1.0), (2, 2, 0.0), (2, 2, -1.0)])
def test_invalid_grids(nx, ny, h):
    with pytest.raises(ValueError):
        make_grid(nx, ny, h)


def test_index_roundtrip():
    g = make_grid(7, 4)
    j = np.arange(g.n_pixels)
    ix, iy = g.pixel_coords(j)
    np.testing.assert_array_equal(g.flat_index(ix, iy), j)
    with pytest.raises(ValueError):
        g.pixel_coords(g.n_pixels)


# ---------------------------------------------------------------- views


def test_full_collection_shape():
    g = make_grid(50, 50)
    v = parallel_views(g, 360, 0, 1, 50)
    assert v.n_views == 360 and v.n_rays == 18000
    np.testing.assert_allclose(v.angles_deg, np.arange(360.0))


def test_single_view_axis_parallel():
    g = make_grid(6, 6)
    v = parallel_views(g, 1, 0, 1, 6)
    d = v.ray_b - v.ray_a
    np.testing.assert_allclose(d[:, 1], 0.0, atol=1e-12)
    assert np.all(d[:, 0] > 0)


def crossing_sets(grid, views, k):
    return {c.pixel for c in trace_ray(grid, views.ray(k))}


def test_opposite_views_retrace_reversed(backend):
    g = make_grid(8, 8)
    v = parallel_views(g, 4, 0, 90, 8)
    n = v.detector_pixels
    for i in range(n):
        fwd = [c.pixel for c in trace_ray(g, v.ray(0 * n + i))]
        back = [c.pixel for c in trace_ray(g, v.ray(2 * n + (n - 1 - i)))]
        assert fwd == back[::-1]


def test_half_turn_symmetry_full_collection(backend):
    g = make_grid(10, 10)
    v = parallel_views(g, 360, 0, 1, 10)
    n = v.detector_pixels
    for view in (0, 17, 45, 133):
        for i in range(n):
            assert crossing_sets(g, v, view * n + i) == crossing_sets(g, v, (view + 180) * n + n - 1 - i)


def test_views_validate_counts():
    g = make_grid(4, 4)
    with pytest.raises(ValueError):
        parallel_views(g, 0, 0, 1, 4)
    with pytest.raises(ValueError):
        parallel_views(g, 3, 0, 1, 0)


def test_from_rays_requires_equal_views():
    with pytest.raises(ValueError):
        ViewSet.from_rays([[Ray((0, 0), (1, 0))], []])


# ---------------------------------------------------------------- pinhole


@pytest.mark.parametrize("angle", [0.0, 30.0, 90.0, 212.0])
def test_far_pinhole_matches_parallel(angle, backend):
    g = make_grid(12, 12)
    n = 12
    par = parallel_views(g, 1, angle, 1, n)
    pin = pinhole_views(g, [PinholePose(angle, 1e6 * 12)], n)
    for i in range(n):
        cp = trace_ray(g, par.ray(i))
        ch = trace_ray(g, pin.ray(i))
        xp = np.array(g.pixel_coords(np.array([c.pixel for c in cp], dtype=int))).T
        xh = np.array(g.pixel_coords(np.array([c.pixel for c in ch], dtype=int))).T
        if len(xp) == 0 or len(xh) == 0:
            assert len(xp) == len(xh) == 0
            continue
        # every crossed pixel lies within one pixel of the other family's path
        dist = np.abs(xp[:, None, :] - xh[None, :, :]).max(axis=2)
        assert dist.min(axis=1).max() <= 1
        assert dist.min(axis=0).max() <= 1


@pytest.mark.parametrize("distance", [0.0, 2.0, 5.0])
def test_pinhole_inside_or_on_grid_rejected(distance):
    # 10x10 grid: half-width 5, so distance 5 at angle 0 sits on the boundary
    g = make_grid(10, 10)
    with pytest.raises(ValueError):
        pinhole_views(g, [PinholePose(0.0, distance)], 4)


def test_pinhole_single_pixel_grid(backend):
    g = make_grid(1, 1)
    v = pinhole_views(g, [PinholePose(a, 10.0) for a in (0, 45, 200)], 5)
    for k in range(v.n_rays):
        cr = trace_ray(g, v.ray(k))
        assert len(cr) <= 1
        assert all(c.pixel == 0 for c in cr)


def test_pinhole_rays_pass_through_pinhole():
    g = make_grid(8, 8)
    pose = PinholePose(60.0, 40.0)
    v = pinhole_views(g, [pose], 6)
    p = pose.pinhole(g)
    for k in range(v.n_rays):
        a, b = v.ray_a[k], v.ray_b[k]
        d = b - a
        cross = d[0] * (p - a)[1] - d[1] * (p - a)[0]
        assert abs(cross) / np.linalg.norm(d) < 1e-9


# ---------------------------------------------------------------- trace_ray


def test_axis_aligned_row(backend):
    g = make_grid(5, 5)
    cr = trace_ray(g, Ray((-3.0, 0.0), (3.0, 0.0)))
    assert [c.pixel for c in cr] == [10, 11, 12, 13, 14]
    np.testing.assert_allclose([c.length for c in cr], 1.0, rtol=1e-14)


def test_diagonal_single_pixel(backend):
    g = make_grid(1, 1)
    cr = trace_ray(g, Ray((-1.0, -1.0), (1.0, 1.0)))
    assert len(cr) == 1
    assert cr[0].pixel == 0
    assert cr[0].length == pytest.approx(np.sqrt(2), rel=1e-14)


def test_diagonal_through_corners(backend):
    # passes exactly through lattice corners: no zero-length crossings
    g = make_grid(4, 4)
    cr = trace_ray(g, Ray((-3.0, -3.0), (3.0, 3.0)))
    assert [c.pixel for c in cr] == [0, 5, 10, 15]
    np.testing.assert_allclose([c.length for c in cr], np.sqrt(2), rtol=1e-13)


def test_ray_along_grid_line_is_deterministic(backend):
    g = make_grid(4, 4)
    cr = trace_ray(g, Ray((-3.0, 0.0), (3.0, 0.0)))
    assert sum(c.length for c in cr) == pytest.approx(4.0)
    assert len({c.pixel for c in cr}) == len(cr) == 4


def test_miss_returns_empty(backend):
    g = make_grid(4, 4)
    assert trace_ray(g, Ray((-5.0, 3.0), (5.0, 3.0))) == []


def test_segment_ending_inside(backend):
    g = make_grid(3, 1)
    cr = trace_ray(g, Ray((-3.0, 0.0), (0.25, 0.0)))
    assert [c.pixel for c in cr] == [0, 1]
    np.testing.assert_allclose([c.length for c in cr], [1.0, 0.75])


def test_random_rays_match_clipping_oracle(rng, backend):
    g = make_grid(16, 16)
    for _ in range(200):
        p, q = rng.uniform(-12, 12, 2), rng.uniform(-12, 12, 2)
        cr = trace_ray(g, Ray(tuple(p), tuple(q)))
        total = sum(c.length for c in cr)
        ref = clipped_length(g, p, q)
        assert total == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_per_pixel_lengths_match_box_clipping(rng, backend):
    g = make_grid(6, 5, 0.7)
    for _ in range(25):
        p, q = rng.uniform(-4, 4, 2), rng.uniform(-4, 4, 2)
        cr = trace_ray(g, Ray(tuple(p), tuple(q)))
        ref = pixel_lengths(g, p, q)
        got = {c.pixel: c.length for c in cr}
        assert set(got) == set(ref)
        for j in ref:
            assert got[j] == pytest.approx(ref[j], rel=1e-9, abs=1e-12)


coord = st.floats(-12, 12, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord)
def test_traversal_properties(x0, y0, x1, y1):
    g = make_grid(9, 7)
    if (x0, y0) == (x1, y1):
        return
    cr = trace_ray(g, Ray((x0, y0), (x1, y1)))
    pix = np.array([c.pixel for c in cr], dtype=int)
    lens = np.array([c.length for c in cr])
    assert np.all(lens > 0)
    assert len(set(pix.tolist())) == len(pix)
    assert lens.sum() <= np.hypot(x1 - x0, y1 - y0) + 1e-9
    if len(pix) > 1:
        ix, iy = g.pixel_coords(pix)
        # each axis index moves in the direction of travel only
        for d, step in ((x1 - x0, np.diff(ix)), (y1 - y0, np.diff(iy))):
            assert np.all(step * np.sign(d) >= 0)
        assert np.all(np.abs(np.diff(ix)) + np.abs(np.diff(iy)) >= 1)


def test_trace_segments_matches_single_rays(rng, backend):
    g = make_grid(10, 10)
    a = rng.uniform(-8, 8, (30, 2))
    b = rng.uniform(-8, 8, (30, 2))
    indptr, pix, lens = trace_segments(g, a, b)
    for r in range(30):
        cr = trace_ray(g, Ray(tuple(a[r]), tuple(b[r])))
        np.testing.assert_array_equal(pix[indptr[r]:indptr[r + 1]], [c.pixel for c in cr])
        np.testing.assert_allclose(lens[indptr[r]:indptr[r + 1]], [c.length for c in cr])


def test_backends_agree(rng):
    from occtomo import _backend

    if len(_backend.available()) < 2:
        pytest.skip("compiled backend not built")
    g = make_grid(23, 17, 0.9)
    a = rng.uniform(-15, 15, (500, 2))
    b = rng.uniform(-15, 15, (500, 2))
    x0, y0 = g.origin
    args = [np.ascontiguousarray(c) for c in (a[:, 0], a[:, 1], b[:, 0], b[:, 1])]
    args += [g.nx, g.ny, x0, y0, g.pixel_size]
    ip_c, px_c, ln_c = _backend.load("cython").trace_batch(*args)
    ip_p, px_p, ln_p = _backend.load("python").trace_batch(*args)
    np.testing.assert_array_equal(ip_c, ip_p)
    np.testing.assert_array_equal(px_c, px_p)
    np.testing.assert_allclose(ln_c, ln_p, rtol=0, atol=1e-12)


# ---------------------------------------------------------------- trace_between


def test_between_edge_pixel_excluded_is_empty(backend):
    g = make_grid(5, 5)
    j = g.flat_index(4, 2)
    assert trace_between(g, j, (3.0, 0.0)) == []


def test_between_center_to_axis_detector(backend):
    g = make_grid(5, 5)
    j = g.flat_index(2, 2)
    cr = trace_between(g, j, (4.0, 0.0))
    assert [c.pixel for c in cr] == [13, 14]
    np.testing.assert_allclose([c.length for c in cr], 1.0, rtol=1e-14)


def test_between_includes_half_chord(backend):
    g = make_grid(5, 5)
    j = g.flat_index(2, 2)
    cr = trace_between(g, j, (4.0, 0.0), exclude_source=False)
    assert [c.pixel for c in cr] == [12, 13, 14]
    np.testing.assert_allclose([c.length for c in cr], [0.5, 1.0, 1.0], rtol=1e-14)


def test_between_never_contains_source(rng, backend):
    g = make_grid(9, 9)
    for _ in range(100):
        j = int(rng.integers(g.n_pixels))
        det = rng.uniform(-10, 10, 2)
        assert j not in {c.pixel for c in trace_between(g, j, det)}


@pytest.mark.parametrize("j", [-1, 25])
def test_between_bad_index(j):
    with pytest.raises(ValueError):
        trace_between(make_grid(5, 5), j, (3.0, 0.0))


def test_grid_is_frozen():
    g = Grid(2, 2)
    with pytest.raises(Exception):
        g.nx = 3
