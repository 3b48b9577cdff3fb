"""Local second-order pixel interactions.

The compact feature holds one block per window offset d: the image shifted by
d (zero fill) times the image, i.e. block_d[p] = x[p + d] * x[p]. The full,
redundant form stacks every windowed outer product and exists only as an
oracle for small images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import DimensionError, check_image

MAX_FULL_PIXELS = 256


@dataclass(frozen=True)
class LocalWindow:
    """Square window of side 2*radius + 1; offsets (dy, dx) in row-major order."""

    radius: int

    def __post_init__(self):
        if int(self.radius) < 0:
            raise ValueError("radius must be >= 0")
        object.__setattr__(self, "radius", int(self.radius))

    @classmethod
    def from_side(cls, side: int) -> "LocalWindow":
        """Window covering at least `side` pixels; even sides round up to the next odd."""
        side = max(1, int(np.ceil(side)))
        return cls(side // 2)

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def size(self) -> int:
        return self.side * self.side

    @property
    def offsets(self) -> list[tuple[int, int]]:
        r = self.radius
        return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]


def _shift(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """out[i, j] = image[i + dy, j + dx], zero outside."""
    H, W = image.shape
    out = np.zeros_like(image)
    if abs(dy) >= H or abs(dx) >= W:
        return out
    src = image[max(dy, 0):H + min(dy, 0), max(dx, 0):W + min(dx, 0)]
    out[max(-dy, 0):H + min(-dy, 0), max(-dx, 0):W + min(-dx, 0)] = src
    return out


def local_quadratic_full(image, window: LocalWindow) -> np.ndarray:
    """Concatenate, over every pixel i, the flattened M x M windowed outer product S_i."""
    image = check_image(image)
    H, W = image.shape
    if H * W > MAX_FULL_PIXELS:
        raise DimensionError(
            f"full local-quadratic form is an oracle for D <= {MAX_FULL_PIXELS} pixels, got {H * W}"
        )
    r = window.radius
    padded = np.pad(image, r)
    side = window.side
    out = np.empty((H * W, window.size * window.size))
    for i in range(H):
        for j in range(W):
            patch = padded[i:i + side, j:j + side].ravel()
            out[i * W + j] = np.outer(patch, patch).ravel()
    return out.ravel()


def local_quadratic_compact(image, window: LocalWindow) -> np.ndarray:
    """M blocks of length D, block m = shift(x, offsets[m]) * x."""
    image = check_image(image)
    return np.concatenate([(_shift(image, dy, dx) * image).ravel() for dy, dx in window.offsets])


def local_quadratic_batch(images, window: LocalWindow, out=None) -> np.ndarray:
    """Compact features for a stack (n, H, W) of images, one row per image."""
    images = np.asarray(images, dtype=np.float64)
    n, H, W = images.shape
    D = H * W
    if out is None:
        out = np.empty((n, window.size * D))
    r = window.radius
    padded = np.pad(images, ((0, 0), (r, r), (r, r)))
    for m, (dy, dx) in enumerate(window.offsets):
        shifted = padded[:, r + dy:r + dy + H, r + dx:r + dx + W]
        np.multiply(shifted, images, out=out[:, m * D:(m + 1) * D].reshape(n, H, W))
    return out


def quad_dimension(image_dims, window: LocalWindow) -> int:
    return window.size * int(image_dims[0]) * int(image_dims[1])


def pair_index(image_dims, window: LocalWindow, p, q) -> int:
    """Index in the compact feature that holds x[p] * x[q].

    `p` and `q` are (row, col) pixels within the window of each other.
    """
    H, W = image_dims
    dy, dx = q[0] - p[0], q[1] - p[1]
    r = window.radius
    if max(abs(dy), abs(dx)) > r:
        raise ValueError(f"pixels {p} and {q} are not within radius {r}")
    m = (dy + r) * window.side + (dx + r)
    return m * H * W + p[0] * W + p[1]


def reconstruct_products(feature, image_dims, window: LocalWindow) -> dict:
    """Map each unordered in-window, in-bounds pixel pair to its product.

    Keys are pairs of flat pixel indices (a, b) with a <= b.
    """
    feature = np.asarray(feature, dtype=np.float64)
    H, W = image_dims
    r = window.radius
    out = {}
    for i in range(H):
        for j in range(W):
            for dy in range(0, r + 1):
                for dx in range(-r, r + 1):
                    if dy == 0 and dx < 0:
                        continue
                    qi, qj = i + dy, j + dx
                    if not (0 <= qi < H and 0 <= qj < W):
                        continue
                    a, b = i * W + j, qi * W + qj
                    out[(min(a, b), max(a, b))] = feature[pair_index(image_dims, window, (i, j), (qi, qj))]
    return out
