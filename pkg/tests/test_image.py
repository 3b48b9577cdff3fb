import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from quadhog.image import (
    DimensionError,
    PoolingSpec,
    box_kernel,
    box_pooling,
    check_images,
    conv2d_same,
    convolution_matrix,
    pool,
    power_normalize,
    selection_matrix,
    to_gray,
    whiten,
)
from quadhog.synth import radial_amplitude_spectrum, sample_pink_noise


def brute_conv(x, k):
    H, W = x.shape
    kh, kw = k.shape
    out = np.zeros_like(x)
    for i in range(H):
        for j in range(W):
            s = 0.0
            for a in range(kh):
                for b in range(kw):
                    si, sj = i - a + kh // 2, j - b + kw // 2
                    if 0 <= si < H and 0 <= sj < W:
                        s += k[a, b] * x[si, sj]
            out[i, j] = s
    return out


def test_identity_kernel(rng):
    x = rng.standard_normal((7, 5))
    np.testing.assert_array_equal(conv2d_same(x, np.ones((1, 1))), x)


def test_impulse_gives_flipped_kernel(rng):
    x = np.zeros((9, 9))
    x[4, 4] = 1.0
    k = rng.standard_normal((3, 3))
    out = conv2d_same(x, k)
    np.testing.assert_allclose(out[3:6, 3:6], k, atol=1e-15)
    assert np.count_nonzero(out) == 9


@pytest.mark.parametrize("ksize", [(3, 3), (5, 5), (3, 5), (13, 13)])
def test_matches_direct_loop(rng, ksize):
    x = rng.standard_normal((16, 16) if ksize[0] > 8 else (8, 8))
    k = rng.standard_normal(ksize)
    np.testing.assert_allclose(conv2d_same(x, k), brute_conv(x, k), atol=1e-10)


def test_kernel_larger_than_image():
    with pytest.raises(DimensionError):
        conv2d_same(np.zeros((3, 3)), np.ones((5, 5)))


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        conv2d_same(np.zeros((8, 8)), np.ones((2, 2)))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-10, 10)),
       arrays(np.float64, (6, 6), elements=st.floats(-10, 10)),
       st.floats(-3, 3))
def test_linearity(a, b, s):
    k = np.arange(9.0).reshape(3, 3) - 4
    np.testing.assert_allclose(conv2d_same(a + s * b, k),
                               conv2d_same(a, k) + s * conv2d_same(b, k), atol=1e-9)


def test_convolution_matrix_agrees(rng):
    x = rng.standard_normal((7, 9))
    k = rng.standard_normal((5, 3))
    G = convolution_matrix(x.shape, k)
    np.testing.assert_allclose(G @ x.ravel(), conv2d_same(x, k).ravel(), atol=1e-12)


class TestPowerNormalize:
    def test_two_values(self):
        np.testing.assert_allclose(power_normalize(np.array([[1.0], [3.0]])), [[-1.0], [1.0]])

    def test_constant_is_degenerate(self):
        out, flag = power_normalize(np.full((4, 4), 2.5), return_flag=True)
        assert flag
        assert not out.any()

    def test_statistics(self, rng):
        out, flag = power_normalize(rng.uniform(0, 9, (16, 16)), return_flag=True)
        assert not flag
        assert abs(out.mean()) < 1e-12
        assert abs(np.sqrt(np.mean(out ** 2)) - 1) < 1e-12

    def test_idempotent(self, rng):
        once = power_normalize(rng.standard_normal((10, 6)))
        np.testing.assert_allclose(power_normalize(once), once, atol=1e-14)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            power_normalize(np.array([[1.0, np.nan]]))


class TestWhiten:
    def test_flat_image(self):
        assert not whiten(np.full((8, 8), 3.0)).any()

    def test_zero_exponent(self, rng):
        x = rng.standard_normal((12, 12)) + 4
        np.testing.assert_allclose(whiten(x, 0.0), power_normalize(x - x.mean()), atol=1e-12)

    def test_pink_noise_becomes_flat(self):
        # averaged over samples to keep the estimate steady
        stack = np.array([whiten(sample_pink_noise(64, s)) for s in range(40)])
        f, amp = radial_amplitude_spectrum(stack)
        mid = amp[4:24]
        assert np.all(np.abs(mid / mid.mean() - 1) < 0.2)


class TestPool:
    def test_identity(self, rng):
        x = rng.standard_normal((5, 6))
        np.testing.assert_array_equal(pool(x, PoolingSpec(np.ones((1, 1)), 1)), x)

    def test_constant_block(self):
        out = pool(np.full((4, 4), 7.0), box_pooling(2))
        np.testing.assert_allclose(out, np.full((2, 2), 7.0))

    def test_box_mass(self):
        for size in (1, 2, 3, 4):
            k = box_kernel(size)
            assert k.shape[0] % 2 == 1
            assert k.sum() == pytest.approx(1.0)
            assert np.count_nonzero(k) == size * size

    def test_matches_materialized_operators(self, rng):
        x = rng.standard_normal((8, 8))
        spec = box_pooling(2)
        S = selection_matrix(x.shape, spec)
        B = convolution_matrix(x.shape, spec.blur)
        np.testing.assert_allclose((S @ B @ x.ravel()).reshape(4, 4), pool(x, spec), atol=1e-12)

    def test_stride_too_large(self):
        with pytest.raises(DimensionError):
            pool(np.zeros((3, 3)), PoolingSpec(np.ones((1, 1)), 4))

    def test_non_box_blur_rejected(self):
        with pytest.raises(ValueError):
            PoolingSpec(np.arange(9.0).reshape(3, 3), 2)


def test_check_images_flat_rows():
    X = np.arange(24.0).reshape(2, 12)
    assert check_images(X, (3, 4)).shape == (2, 3, 4)
    with pytest.raises(DimensionError):
        check_images(X, (5, 5))


def test_gray_weights():
    assert to_gray(np.array([[[1.0, 1.0, 1.0]]]))[0, 0] == pytest.approx(1.0)
    assert to_gray(np.array([[[0.0, 1.0, 0.0]]]))[0, 0] == pytest.approx(0.587)
