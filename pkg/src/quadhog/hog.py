"""HOG as squared filter responses, in convolutional and explicit-operator form.

The convolutional path filters the image with each kernel of a bank, squares
the responses, box-blurs and downsamples. The same descriptor is a linear map
of the Kronecker self-product of the image, ``L @ kron(x, x)``; the sparse
operator L is assembled by :func:`build_projection` for small images.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .image import (
    DimensionError,
    PoolingSpec,
    check_image,
    conv2d_same,
    convolution_matrix,
    pool,
    selection_matrix,
)

MAX_PROJECTION_PIXELS = 400


class SizeCapError(DimensionError):
    """The explicit operator would have D**2 columns beyond the supported cap."""


@dataclass(frozen=True)
class FilterBank:
    filters: tuple
    orientations: int
    scales: int

    def __post_init__(self):
        if len(self.filters) != self.orientations * self.scales:
            raise ValueError("filter count must equal orientations * scales")

    def __len__(self):
        return len(self.filters)

    @property
    def max_support(self) -> int:
        return max(max(k.shape) for k in self.filters)


def gabor_kernel(support: int, theta: float) -> np.ndarray:
    """Even-symmetric Gabor with wavelength support/2 and envelope sigma support/5.

    The taps are shifted to zero mean and scaled to unit L2 norm.
    """
    if support < 1 or support % 2 == 0:
        raise ValueError("support must be a positive odd integer")
    h = support // 2
    y, x = np.mgrid[-h:h + 1, -h:h + 1].astype(np.float64)
    wavelength = support / 2.0
    sigma = support / 5.0
    along = x * np.cos(theta) + y * np.sin(theta)
    k = np.exp(-(x * x + y * y) / (2 * sigma * sigma)) * np.cos(2 * np.pi * along / wavelength)
    k -= k.mean()
    norm = np.linalg.norm(k)
    if norm == 0:
        raise ValueError(f"support {support} is too small for a zero-mean Gabor")
    return k / norm


def make_gabor_bank(orientations: int = 18, scales: int = 4, base_support: int = 5) -> FilterBank:
    """Gabor bank ordered scale-major, orientation theta_k = k*pi/orientations.

    Support (and with it wavelength and envelope) doubles per scale:
    ``(base_support - 1) * 2**s + 1`` keeps every support odd.
    """
    if orientations < 1 or scales < 1:
        raise ValueError("orientations and scales must be >= 1")
    if base_support < 3 or base_support % 2 == 0:
        raise ValueError("base_support must be odd and >= 3")
    filters = []
    for s in range(scales):
        support = (base_support - 1) * 2 ** s + 1
        for k in range(orientations):
            filters.append(gabor_kernel(support, k * np.pi / orientations))
    return FilterBank(tuple(filters), orientations, scales)


def hog_conv(image, bank: FilterBank, pooling: PoolingSpec) -> np.ndarray:
    """Filter, square, blur, downsample; concatenate filter-major."""
    image = check_image(image)
    out = []
    for g in bank.filters:
        r = conv2d_same(image, g)
        out.append(pool(r * r, pooling).ravel())
    return np.concatenate(out)


@dataclass(frozen=True)
class ProjectionMatrix:
    """Sparse operator L with ``L @ kron(x, x) == hog_conv(x)``."""

    matrix: sp.csr_matrix
    image_shape: tuple
    n_filters: int
    cell_shape: tuple
    _coo: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coo = self.matrix.tocoo()
        D = self.image_shape[0] * self.image_shape[1]
        cols = coo.col.astype(np.int64)
        object.__setattr__(self, "_coo", (coo.row.astype(np.int64), cols // D, cols % D, coo.data))

    @property
    def shape(self):
        return self.matrix.shape


def build_projection(bank: FilterBank, pooling: PoolingSpec, image_dims) -> ProjectionMatrix:
    """Assemble L block by block, one block of pooled cells per filter.

    Row (f, c) holds the D x D matrix ``G_f.T @ diag(beta_c) @ G_f`` flattened
    row-major, where beta_c is row c of the blur-then-select operator. This is
    the product D B M (G_f kron G_f) with the selection M folded in: only the
    diagonal entries of ``G_f x x.T G_f.T`` are ever needed.
    """
    H, W = int(image_dims[0]), int(image_dims[1])
    D = H * W
    if D > MAX_PROJECTION_PIXELS:
        raise SizeCapError(
            f"explicit projection for {H}x{W} images needs D**2 = {D * D} columns; "
            f"the cap is D <= {MAX_PROJECTION_PIXELS} pixels"
        )
    if bank.max_support > min(H, W):
        raise DimensionError(f"filter support {bank.max_support} exceeds image {H}x{W}")
    SB = (selection_matrix((H, W), pooling) @ convolution_matrix((H, W), pooling.blur)).tocsr()
    n_cells = SB.shape[0]
    rows, cols, vals = [], [], []
    for f, g in enumerate(bank.filters):
        G = convolution_matrix((H, W), g)
        for c in range(n_cells):
            lo, hi = SB.indptr[c], SB.indptr[c + 1]
            taps = SB.indices[lo:hi]
            beta = SB.data[lo:hi]
            Gs = G[taps]
            block = (Gs.T @ sp.diags(beta) @ Gs).tocoo()
            rows.append(np.full(block.nnz, f * n_cells + c, dtype=np.int64))
            cols.append(block.row.astype(np.int64) * D + block.col)
            vals.append(block.data)
    n_rows = len(bank) * n_cells
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, D * D))
    L.sum_duplicates()
    return ProjectionMatrix(L, (H, W), len(bank), pooling.output_shape((H, W)))


def quadratic_apply(matrix, x) -> np.ndarray:
    """``matrix @ kron(x, x)`` for a sparse matrix, without forming kron(x, x)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    D = x.size
    if matrix.shape[1] != D * D:
        raise DimensionError(f"operator has {matrix.shape[1]} columns, image gives D**2 = {D * D}")
    coo = matrix.tocoo()
    cols = coo.col.astype(np.int64)
    return np.bincount(coo.row, weights=coo.data * x[cols // D] * x[cols % D], minlength=matrix.shape[0])


def apply_projection(L: ProjectionMatrix, image) -> np.ndarray:
    x = check_image(image).ravel()
    D = x.size
    if L.shape[1] != D * D:
        raise DimensionError(f"operator has {L.shape[1]} columns, image gives D**2 = {D * D}")
    row, a, b, data = L._coo
    return np.bincount(row, weights=data * x[a] * x[b], minlength=L.shape[0])


def hog_dimension(image_dims, orientations: int = 18, cell: int = 4) -> int:
    """Length of :func:`hog_baseline` output."""
    per_cell = orientations + (orientations // 2 if orientations % 2 == 0 else 0) + 4
    return (int(image_dims[0]) // cell) * (int(image_dims[1]) // cell) * per_cell


def hog_baseline(image, orientations: int = 18, cell: int = 4, eps: float = 1e-4) -> np.ndarray:
    """Gradient-orientation HOG in the Felzenszwalb style.

    Central-difference gradients vote, split linearly between the two nearest
    of `orientations` contrast-sensitive bins (centres at
    ``(k + 1/2) * 2*pi/orientations``), into cell sums. Each cell is
    normalized by the energy of the four 2x2 cell blocks containing it,
    measured on the contrast-insensitive histogram, and clipped at 0.2.
    Per cell, in order: the sensitive bins and (for even `orientations`) the
    insensitive bins, each summed over the four normalizations with weight
    1/2, then four texture terms (sensitive bins summed per normalization,
    weight 0.2357). Cell-major.
    """
    image = check_image(image)
    H, W = image.shape
    if H % cell or W % cell:
        raise DimensionError(f"image {H}x{W} is not divisible into {cell}x{cell} cells")
    dx = np.zeros_like(image)
    dy = np.zeros_like(image)
    dx[:, 1:-1] = image[:, 2:] - image[:, :-2]
    dy[1:-1, :] = image[2:, :] - image[:-2, :]
    mag = np.hypot(dx, dy)
    angle = np.mod(np.arctan2(dy, dx), 2 * np.pi)
    pos = angle / (2 * np.pi / orientations) - 0.5
    k0 = np.floor(pos).astype(np.int64)
    frac = pos - k0
    k0 %= orientations
    k1 = (k0 + 1) % orientations

    cr, cc = H // cell, W // cell
    cell_idx = (np.arange(H)[:, None] // cell) * cc + (np.arange(W)[None, :] // cell)
    hist = np.zeros(cr * cc * orientations)
    np.add.at(hist, (cell_idx * orientations + k0).ravel(), (mag * (1 - frac)).ravel())
    np.add.at(hist, (cell_idx * orientations + k1).ravel(), (mag * frac).ravel())
    hist = hist.reshape(cr, cc, orientations)
    paired = orientations % 2 == 0
    half = orientations // 2
    unsigned = hist[:, :, :half] + hist[:, :, half:] if paired else hist

    energy = np.pad((unsigned * unsigned).sum(axis=2), 1)
    # block (i, j) covers padded cells (i..i+1, j..j+1)
    blocks = energy[:-1, :-1] + energy[1:, :-1] + energy[:-1, 1:] + energy[1:, 1:]
    sensitive = np.zeros_like(hist)
    insensitive = np.zeros_like(unsigned) if paired else np.zeros((cr, cc, 0))
    texture = np.zeros((cr, cc, 4))
    for t, (di, dj) in enumerate(((0, 0), (1, 0), (0, 1), (1, 1))):
        n = np.sqrt(blocks[di:di + cr, dj:dj + cc] + eps)[:, :, None]
        clipped = np.minimum(hist / n, 0.2)
        sensitive += 0.5 * clipped
        if paired:
            insensitive += 0.5 * np.minimum(unsigned / n, 0.2)
        texture[:, :, t] = 0.2357 * clipped.sum(axis=2)
    return np.concatenate([sensitive, insensitive, texture], axis=2).ravel()
