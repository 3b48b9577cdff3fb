import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadhog.image import DimensionError
from quadhog.quad import (
    LocalWindow,
    local_quadratic_batch,
    local_quadratic_compact,
    local_quadratic_full,
    pair_index,
    quad_dimension,
    reconstruct_products,
)


def outer_lookup(x):
    return np.outer(x.ravel(), x.ravel())


def test_radius_zero(rng):
    x = rng.standard_normal((5, 4))
    w = LocalWindow(0)
    np.testing.assert_array_equal(local_quadratic_full(x, w), (x * x).ravel())
    np.testing.assert_array_equal(local_quadratic_compact(x, w), (x * x).ravel())


def test_zero_image():
    w = LocalWindow(1)
    assert local_quadratic_full(np.zeros((4, 4)), w).shape == (81 * 16,)
    assert not local_quadratic_full(np.zeros((4, 4)), w).any()


def test_full_entries_are_pixel_products(rng):
    x = rng.standard_normal((6, 6))
    S = outer_lookup(x)
    full = local_quadratic_full(x, LocalWindow(1)).reshape(36, 9, 9)
    padded = np.pad(np.arange(36).reshape(6, 6), 1, constant_values=-1)
    for i in range(6):
        for j in range(6):
            idx = padded[i:i + 3, j:j + 3].ravel()
            for a in range(9):
                for b in range(9):
                    want = 0.0 if idx[a] < 0 or idx[b] < 0 else S[idx[a], idx[b]]
                    assert full[i * 6 + j, a, b] == want


@pytest.mark.parametrize("r", [1, 2])
def test_compact_recovers_in_window_products(rng, r):
    x = rng.standard_normal((6, 6))
    S = outer_lookup(x)
    got = reconstruct_products(local_quadratic_compact(x, LocalWindow(r)), x.shape, LocalWindow(r))
    expected = {}
    for a in range(36):
        for b in range(a, 36):
            pa, pb = divmod(a, 6), divmod(b, 6)
            if max(abs(pa[0] - pb[0]), abs(pa[1] - pb[1])) <= r:
                expected[(a, b)] = S[a, b]
    assert got.keys() == expected.keys()
    for k, v in expected.items():
        assert got[k] == v


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-4, 4), st.integers(0, 2))
def test_compact_degree_two(seed, a, r):
    x = np.random.default_rng(seed).standard_normal((5, 7))
    w = LocalWindow(r)
    np.testing.assert_allclose(local_quadratic_compact(a * x, w), a * a * local_quadratic_compact(x, w),
                               rtol=1e-12, atol=1e-14)


def test_zero_fill_at_border():
    x = np.ones((3, 3))
    blocks = local_quadratic_compact(x, LocalWindow(1)).reshape(9, 3, 3)
    # offset (-1, -1): the first row and column have no partner
    assert not blocks[0, 0].any() and not blocks[0, :, 0].any()
    assert blocks[4].all()


def test_batch_matches_single(rng):
    imgs = rng.standard_normal((4, 7, 5))
    w = LocalWindow(2)
    out = np.empty((4, quad_dimension((7, 5), w)))
    local_quadratic_batch(imgs, w, out=out)
    for img, row in zip(imgs, out):
        np.testing.assert_array_equal(row, local_quadratic_compact(img, w))


def test_dimensions():
    assert quad_dimension((80, 80), LocalWindow(1)) == 57600
    assert quad_dimension((16, 16), LocalWindow(2)) == 6400
    assert quad_dimension((9, 11), LocalWindow(0)) == 99


def test_window_from_side():
    assert LocalWindow.from_side(3).radius == 1
    assert LocalWindow.from_side(4).side == 5
    assert LocalWindow.from_side(0.4).radius == 0
    with pytest.raises(ValueError):
        LocalWindow(-1)


def test_pair_index_out_of_window():
    with pytest.raises(ValueError):
        pair_index((6, 6), LocalWindow(1), (0, 0), (0, 2))


def test_full_size_cap():
    with pytest.raises(DimensionError):
        local_quadratic_full(np.zeros((20, 20)), LocalWindow(1))
