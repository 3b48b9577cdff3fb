import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from quadhog.features import (
    FEATURES,
    HogBaselineFeatures,
    HogConvFeatures,
    HogReformFeatures,
    LocalQuadraticFeatures,
    PixelFeatures,
    make_extractor,
)
from quadhog.hog import hog_dimension
from quadhog.image import DimensionError
from quadhog.quad import LocalWindow, local_quadratic_compact, quad_dimension
from quadhog.svm import DualCDClassifier


@pytest.mark.parametrize("name", sorted(FEATURES))
def test_clone_and_params(name):
    est = make_extractor(name)
    params = est.get_params()
    assert clone(est).get_params() == params


def test_unknown_feature():
    with pytest.raises(ValueError, match="unknown feature"):
        make_extractor("sift")


def test_output_dimensions(rng):
    X = rng.standard_normal((3, 16, 16))
    assert PixelFeatures().fit_transform(X).shape == (3, 256)
    assert HogBaselineFeatures().fit_transform(X).shape == (3, hog_dimension((16, 16)))
    assert LocalQuadraticFeatures(radius=2).fit_transform(X).shape == (3, quad_dimension((16, 16), LocalWindow(2)))
    conv = HogConvFeatures(orientations=4, scales=2, base_support=3).fit(X)
    assert conv.transform(X).shape == (3, conv.n_features_out_) == (3, 8 * 16)


def test_reform_equals_conv(rng):
    X = rng.standard_normal((4, 12, 12))
    params = dict(orientations=4, scales=1, base_support=5, cell=4)
    a = HogConvFeatures(**params).fit_transform(X)
    b = HogReformFeatures(**params).fit_transform(X)
    np.testing.assert_allclose(b, a, rtol=1e-8, atol=1e-12)


def test_flat_rows_need_shape(rng):
    X = rng.standard_normal((2, 36))
    with pytest.raises(DimensionError):
        LocalQuadraticFeatures().fit(X)
    out = LocalQuadraticFeatures(image_shape=(6, 6)).fit_transform(X)
    np.testing.assert_array_equal(out[1], local_quadratic_compact(X[1].reshape(6, 6), LocalWindow(1)))


def test_fitted_shape_enforced(rng):
    est = PixelFeatures().fit(rng.standard_normal((2, 8, 8)))
    with pytest.raises(DimensionError):
        est.transform(rng.standard_normal((2, 8, 6)))
    with pytest.raises(NotFittedError):
        HogBaselineFeatures().transform(rng.standard_normal((1, 8, 8)))


def test_hog_cell_divisibility(rng):
    with pytest.raises(DimensionError):
        HogBaselineFeatures(cell=4).fit(rng.standard_normal((1, 10, 8)))


def test_pipeline(rng):
    X = rng.standard_normal((40, 6, 6))
    y = np.where(X[:, 2, 2] * X[:, 2, 3] > 0, 1, -1)
    model = make_pipeline(LocalQuadraticFeatures(radius=1), DualCDClassifier(C=10.0, tol=1e-4))
    assert model.fit(X, y).score(X, y) == 1.0
