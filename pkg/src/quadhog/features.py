"""Feature extractors as scikit-learn transformers.

Each transformer takes a stack of images, either 3-D ``(n, rows, cols)`` or
2-D with one row-major image per row (then `image_shape` is required), and
returns one descriptor per row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .hog import apply_projection, build_projection, hog_baseline, hog_conv, hog_dimension, make_gabor_bank
from .image import DimensionError, box_pooling, check_images
from .quad import LocalWindow, local_quadratic_batch, quad_dimension


class _ImageTransformer(TransformerMixin, BaseEstimator):

    def _images(self, X, fitting=False):
        shape = self.image_shape
        if not fitting and shape is None:
            shape = getattr(self, "image_shape_", None)
        imgs = check_images(X, shape)
        if not fitting:
            check_is_fitted(self, "image_shape_")
            if imgs.shape[1:] != self.image_shape_:
                raise DimensionError(f"fitted on {self.image_shape_} images, got {imgs.shape[1:]}")
        return imgs

    def fit(self, X, y=None):
        imgs = self._images(X, fitting=True)
        self.image_shape_ = tuple(imgs.shape[1:])
        self.n_features_in_ = self.image_shape_[0] * self.image_shape_[1]
        self._prepare()
        return self

    def _prepare(self):
        pass

    def transform(self, X):
        imgs = self._images(X)
        out = np.empty((imgs.shape[0], self.n_features_out_))
        for i, img in enumerate(imgs):
            out[i] = self._one(img)
        return out


class PixelFeatures(_ImageTransformer):
    """The raw row-major pixels."""

    def __init__(self, image_shape=None):
        self.image_shape = image_shape

    def _prepare(self):
        self.n_features_out_ = self.n_features_in_

    def transform(self, X):
        return self._images(X).reshape(-1, self.n_features_out_).copy()


class HogBaselineFeatures(_ImageTransformer):
    """Felzenszwalb-style gradient-orientation histograms, 31 values per cell by default."""

    def __init__(self, orientations=18, cell=4, eps=1e-4, image_shape=None):
        self.orientations = orientations
        self.cell = cell
        self.eps = eps
        self.image_shape = image_shape

    def _prepare(self):
        rows, cols = self.image_shape_
        if rows % self.cell or cols % self.cell:
            raise DimensionError(f"image {rows}x{cols} is not divisible into {self.cell}x{self.cell} cells")
        self.n_features_out_ = hog_dimension(self.image_shape_, self.orientations, self.cell)

    def _one(self, img):
        return hog_baseline(img, self.orientations, self.cell, self.eps)


class HogConvFeatures(_ImageTransformer):
    """Squared Gabor responses pooled over cells, computed by convolution."""

    def __init__(self, orientations=18, scales=4, base_support=5, cell=4, image_shape=None):
        self.orientations = orientations
        self.scales = scales
        self.base_support = base_support
        self.cell = cell
        self.image_shape = image_shape

    def _prepare(self):
        self.bank_ = make_gabor_bank(self.orientations, self.scales, self.base_support)
        self.pooling_ = box_pooling(self.cell)
        cr, cc = self.pooling_.output_shape(self.image_shape_)
        self.n_features_out_ = len(self.bank_) * cr * cc

    def _one(self, img):
        return hog_conv(img, self.bank_, self.pooling_)


class HogReformFeatures(HogConvFeatures):
    """The same descriptor as :class:`HogConvFeatures`, through the explicit operator.

    `fit` assembles the sparse operator (``projection_``), which limits this
    path to small images.
    """

    def _prepare(self):
        super()._prepare()
        self.projection_ = build_projection(self.bank_, self.pooling_, self.image_shape_)

    def _one(self, img):
        return apply_projection(self.projection_, img)


class LocalQuadraticFeatures(_ImageTransformer):
    """Products of every pixel with its neighbours inside a square window."""

    def __init__(self, radius=1, image_shape=None):
        self.radius = radius
        self.image_shape = image_shape

    def _prepare(self):
        self.window_ = LocalWindow(self.radius)
        self.n_features_out_ = quad_dimension(self.image_shape_, self.window_)

    def transform(self, X, out=None):
        return local_quadratic_batch(self._images(X), self.window_, out=out)


FEATURES = {
    "pixels": PixelFeatures,
    "hog_baseline": HogBaselineFeatures,
    "hog_conv": HogConvFeatures,
    "hog_reform": HogReformFeatures,
    "quad": LocalQuadraticFeatures,
}


def make_extractor(name: str, **params):
    """Build the transformer registered under `name`."""
    try:
        cls = FEATURES[name]
    except KeyError:
        raise ValueError(f"unknown feature {name!r}; choose from {sorted(FEATURES)}") from None
    return cls(**params)
