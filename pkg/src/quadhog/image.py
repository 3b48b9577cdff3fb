"""Image primitives shared by every feature extractor.

Images are plain 2-D float64 arrays (rows, cols). The vectorized view used by
the matrix forms below is row-major, ``x = image.ravel()``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import signal


class DimensionError(ValueError):
    """Raised when image, kernel or pooling shapes are incompatible."""


def check_image(image, min_shape=(1, 1)) -> np.ndarray:
    """Validate and convert `image` to a finite 2-D float64 array."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.shape[0] < min_shape[0] or arr.shape[1] < min_shape[1]:
        raise DimensionError(f"image of shape {arr.shape} is smaller than {min_shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def check_kernel(kernel) -> np.ndarray:
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim != 2:
        raise DimensionError(f"expected a 2-D kernel, got shape {k.shape}")
    if k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise DimensionError(f"kernel dimensions must be odd, got {k.shape}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel contains non-finite taps")
    return k


def check_images(X, image_shape=None) -> np.ndarray:
    """Return a stack of images with shape (n_samples, rows, cols).

    `X` is either already 3-D, or 2-D with one vectorized image per row, in
    which case `image_shape` is required.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        if image_shape is not None and tuple(X.shape[1:]) != tuple(image_shape):
            raise DimensionError(f"images have shape {X.shape[1:]}, expected {tuple(image_shape)}")
    elif X.ndim == 2:
        if image_shape is None:
            raise DimensionError("image_shape is required for vectorized (2-D) input")
        rows, cols = image_shape
        if X.shape[1] != rows * cols:
            raise DimensionError(f"rows of length {X.shape[1]} do not match image_shape {tuple(image_shape)}")
        X = X.reshape(X.shape[0], rows, cols)
    else:
        raise DimensionError(f"expected 2-D or 3-D input, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return X


def conv2d_same(image, kernel) -> np.ndarray:
    """True 2-D convolution with zero padding; output has the input's shape."""
    image = check_image(image)
    kernel = check_kernel(kernel)
    if kernel.shape[0] > image.shape[0] or kernel.shape[1] > image.shape[1]:
        raise DimensionError(f"kernel {kernel.shape} is larger than image {image.shape}")
    if kernel.size > 121:
        return signal.fftconvolve(image, kernel, mode="same")
    return signal.convolve2d(image, kernel, mode="same", boundary="fill", fillvalue=0.0)


def power_normalize(image, return_flag: bool = False):
    """Shift to zero mean and scale to unit root-mean-square.

    A constant image has no power to normalize; it maps to zeros and, when
    `return_flag` is set, the returned flag is True.
    """
    image = check_image(image)
    centered = image - image.mean()
    rms = np.sqrt(np.mean(centered * centered))
    degenerate = not rms > 1e-12 * max(1.0, np.abs(image).max())
    out = np.zeros_like(centered) if degenerate else centered / rms
    return (out, degenerate) if return_flag else out


def radial_frequency(shape) -> np.ndarray:
    """Radial frequency magnitude (cycles/pixel) on the unshifted FFT grid."""
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    return np.sqrt(fy * fy + fx * fx)


def whiten(image, spectrum_exponent: float = 1.0) -> np.ndarray:
    """Scale every Fourier coefficient by |f|**spectrum_exponent, drop DC, power-normalize.

    The default exponent of +1 flattens a 1/f amplitude spectrum.
    """
    image = check_image(image, min_shape=(2, 2))
    F = np.fft.fft2(image)
    r = radial_frequency(image.shape)
    gain = np.zeros_like(r)
    nz = r > 0
    gain[nz] = r[nz] ** spectrum_exponent
    out = np.real(np.fft.ifft2(F * gain))
    return power_normalize(out)


@dataclass(frozen=True)
class PoolingSpec:
    """Box blur followed by downsampling at ``offset + k * stride``."""

    blur: np.ndarray
    stride: int

    def __post_init__(self):
        blur = check_kernel(self.blur)
        nz = blur[blur != 0]
        if nz.size and not np.allclose(nz, nz[0], rtol=0, atol=1e-15):
            raise ValueError("pooling blur must be a box kernel")
        if int(self.stride) < 1:
            raise ValueError("stride must be >= 1")
        object.__setattr__(self, "blur", blur)
        object.__setattr__(self, "stride", int(self.stride))

    @property
    def offset(self) -> int:
        return self.stride // 2

    def output_shape(self, shape) -> tuple[int, int]:
        return shape[0] // self.stride, shape[1] // self.stride


def box_kernel(size: int) -> np.ndarray:
    """Unit-mass box of footprint `size` x `size`, stored with odd support.

    Even footprints get one extra leading row and column of zeros. Under
    convolution that places the footprint over ``[i - size//2, i + size//2 - 1]``,
    so sampling at ``size//2 + k*size`` tiles the image into disjoint cells.
    """
    size = int(size)
    if size < 1:
        raise ValueError("box size must be >= 1")
    side = size + 1 if size % 2 == 0 else size
    k = np.zeros((side, side))
    k[side - size:, side - size:] = 1.0 / (size * size)
    return k


def box_pooling(size: int, stride: int | None = None) -> PoolingSpec:
    return PoolingSpec(box_kernel(size), size if stride is None else stride)


def _sample_points(shape, spec: PoolingSpec):
    if spec.stride > shape[0] or spec.stride > shape[1]:
        raise DimensionError(f"stride {spec.stride} exceeds image dimensions {tuple(shape)}")
    n_r, n_c = spec.output_shape(shape)
    rows = spec.offset + spec.stride * np.arange(n_r)
    cols = spec.offset + spec.stride * np.arange(n_c)
    return rows, cols


def pool(image, spec: PoolingSpec) -> np.ndarray:
    """Blur with the box kernel then keep every `stride`-th pixel."""
    image = check_image(image)
    rows, cols = _sample_points(image.shape, spec)
    return conv2d_same(image, spec.blur)[np.ix_(rows, cols)]


def convolution_matrix(shape, kernel) -> sp.csr_matrix:
    """Sparse D x D matrix G with ``G @ x.ravel() == conv2d_same(x, kernel).ravel()``."""
    kernel = check_kernel(kernel)
    H, W = shape
    kh, kw = kernel.shape
    ch, cw = kh // 2, kw // 2
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    rows, cols, vals = [], [], []
    for a in range(kh):
        for b in range(kw):
            t = kernel[a, b]
            if t == 0:
                continue
            # out[i, j] += k[a, b] * x[i - a + ch, j - b + cw]
            si, sj = ii - a + ch, jj - b + cw
            ok = (si >= 0) & (si < H) & (sj >= 0) & (sj < W)
            rows.append((ii * W + jj)[ok])
            cols.append((si * W + sj)[ok])
            vals.append(np.full(ok.sum(), t))
    n = H * W
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def selection_matrix(shape, spec: PoolingSpec) -> sp.csr_matrix:
    """Sparse 0/1 matrix picking the pooling sample points from a vectorized image."""
    rows, cols = _sample_points(shape, spec)
    idx = (rows[:, None] * shape[1] + cols[None, :]).ravel()
    m = idx.size
    return sp.csr_matrix((np.ones(m), (np.arange(m), idx)), shape=(m, shape[0] * shape[1]))


def to_gray(rgb) -> np.ndarray:
    """Luma conversion with weights 0.299, 0.587, 0.114."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
