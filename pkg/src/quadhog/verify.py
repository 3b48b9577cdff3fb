"""Equivalence suites behind ``quadhog verify``.

Both compare a fast path against a slow, independent one on random images:
the convolutional HOG against the explicit quadratic operator, and the
compact local-quadratic feature against windowed outer products.
"""

from __future__ import annotations

import numpy as np

from .experiments import Check
from .hog import apply_projection, build_projection, hog_conv, make_gabor_bank
from .image import box_pooling
from .quad import LocalWindow, local_quadratic_compact, local_quadratic_full, reconstruct_products

# (orientations, scales, base_support, cell)
BANK_CONFIGS = ((4, 1, 3, 2), (8, 2, 3, 4), (18, 1, 5, 4))
SHAPES = ((8, 8), (10, 14), (12, 16), (16, 12), (16, 16))


def reformulation_deviation(n_images: int = 100, seed: int = 0, configs=BANK_CONFIGS, shapes=SHAPES) -> float:
    """Largest relative gap between convolutional HOG and the operator form, over all configs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for orientations, scales, base, cell in configs:
        bank = make_gabor_bank(orientations, scales, base)
        pooling = box_pooling(cell)
        cache = {}
        for _ in range(n_images):
            shape = shapes[rng.integers(len(shapes))]
            if shape not in cache:
                cache[shape] = build_projection(bank, pooling, shape)
            img = rng.standard_normal(shape)
            ref = hog_conv(img, bank, pooling)
            got = apply_projection(cache[shape], img)
            worst = max(worst, float(np.abs(got - ref).max() / max(np.abs(ref).max(), 1e-300)))
    return worst


def _outer_product_oracle(full, image_dims, window):
    """In-window pixel products read off the stacked windowed outer products."""
    H, W = image_dims
    r, side = window.radius, window.side
    blocks = np.asarray(full).reshape(H * W, side * side, side * side)
    out = {}
    for i in range(H):
        for j in range(W):
            S = blocks[i * W + j]
            centre = r * side + r
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    qi, qj = i + dy, j + dx
                    if 0 <= qi < H and 0 <= qj < W:
                        a, b = i * W + j, qi * W + qj
                        out[(min(a, b), max(a, b))] = S[centre, (dy + r) * side + (dx + r)]
    return out


def compact_deviation(n_images: int = 50, side: int = 6, radii=(1, 2), seed: int = 0) -> float:
    """Largest gap between products recovered from the compact feature and the outer-product oracle."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_images):
        img = rng.standard_normal((side, side))
        for r in radii:
            window = LocalWindow(r)
            got = reconstruct_products(local_quadratic_compact(img, window), img.shape, window)
            ref = _outer_product_oracle(local_quadratic_full(img, window), img.shape, window)
            if got.keys() != ref.keys():
                return float("inf")
            worst = max(worst, max(abs(got[k] - ref[k]) for k in ref))
    return worst


def run_verify(seed: int = 0) -> list[Check]:
    reform = reformulation_deviation(seed=seed)
    compact = compact_deviation(seed=seed)
    return [
        Check("HOG convolution == operator form (rel. dev. <= 1e-8)", reform <= 1e-8, f"{reform:.3g}"),
        Check("compact quad products == outer products (<= 1e-15)", compact <= 1e-15, f"{compact:.3g}"),
    ]
