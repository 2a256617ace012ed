import numpy as np
import pytest

from occtomo.grid import make_grid
from occtomo.metrics import iou, local_maxima, localize_sources, support_mask, visible_brightness_error


def test_visible_brightness_error():
    s_est = np.array([1.2, 0.9, 5.0, 0.0])
    s_true = np.ones(4)
    vis = np.array([3, 1, 0, 2])
    matter = np.array([True, True, True, False])
    # pixel 2 is hidden and pixel 3 is air
    assert visible_brightness_error(s_est, s_true, vis, matter) == pytest.approx(0.15)
    assert np.isnan(visible_brightness_error(s_est, s_true, np.zeros(4), matter))


def test_local_maxima_threshold():
    g = make_grid(5, 5)
    s = np.zeros(25)
    s[g.flat_index(1, 1)] = 1.0
    s[g.flat_index(3, 3)] = 0.3
    s[g.flat_index(3, 1)] = 0.1
    assert sorted(local_maxima(g, s).tolist()) == [g.flat_index(1, 1), g.flat_index(3, 3)]
    assert local_maxima(g, np.zeros(25)).size == 0


def test_local_maxima_edges():
    g = make_grid(4, 3)
    s = np.zeros(12)
    s[0] = s[11] = 2.0
    assert sorted(local_maxima(g, s).tolist()) == [0, 11]


@pytest.mark.parametrize("shift,dist", [((0, 0), 0), ((1, 1), 1), ((2, 0), 2), ((0, -3), 3)])
def test_localize_chebyshev(shift, dist):
    g = make_grid(9, 9)
    s = np.zeros(81)
    s[g.flat_index(4 + shift[0], 4 + shift[1])] = 1.0
    d, ok = localize_sources(g, s, [g.flat_index(4, 4)])
    assert d[0] == dist and ok[0] == (dist <= 1)


def test_localize_no_peaks():
    g = make_grid(3, 3)
    d, ok = localize_sources(g, np.zeros(9), [4])
    assert np.isinf(d[0]) and not ok[0]


def test_support_and_iou():
    np.testing.assert_array_equal(support_mask([0.2, 0.6, 1.0]), [False, True, True])
    assert not support_mask(np.zeros(3)).any()
    assert iou([1, 1, 0, 0], [0, 1, 1, 0]) == pytest.approx(1 / 3)
    assert iou([0, 0], [0, 0]) == 1.0
