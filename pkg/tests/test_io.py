import struct

import numpy as np
import pytest
from PIL import Image

from quadhog.io import (
    FeatureWriter,
    FormatError,
    load_model,
    open_features,
    read_feature_header,
    read_image,
    save_model,
    write_features,
    write_pgm,
)
from quadhog.svm import SvmModel


def test_png_gray_and_rgb(tmp_path):
    g = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    Image.fromarray(g).save(tmp_path / "g.png")
    np.testing.assert_allclose(read_image(tmp_path / "g.png"), g / 255.0)
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    Image.fromarray(rgb).save(tmp_path / "c.png")
    np.testing.assert_allclose(read_image(tmp_path / "c.png"), 0.299)


def test_sixteen_bit_rejected(tmp_path):
    Image.fromarray(np.full((3, 3), 1000, dtype=np.uint16)).save(tmp_path / "d.png")
    with pytest.raises(FormatError):
        read_image(tmp_path / "d.png")


def test_pgm_round_trip(tmp_path):
    x = np.linspace(0, 1, 20).reshape(4, 5)
    write_pgm(tmp_path / "x.pgm", x)
    np.testing.assert_allclose(read_image(tmp_path / "x.pgm"), x, atol=0.5 / 255 + 1e-12)


def test_feature_container(tmp_path, rng):
    X = rng.standard_normal((7, 5))
    p = tmp_path / "f.qhf"
    with FeatureWriter(p, 5, "quad-r1") as w:
        w.append(X[:3])
        w.append(X[3:])
    assert read_feature_header(p) == {"rows": 7, "cols": 5, "layout": "quad-r1"}
    np.testing.assert_array_equal(open_features(p), X)
    np.testing.assert_array_equal(open_features(p, mmap=False), X)


def test_container_errors(tmp_path, rng):
    p = tmp_path / "f.qhf"
    write_features(p, rng.standard_normal((3, 2)))
    raw = p.read_bytes()
    (tmp_path / "short.qhf").write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        open_features(tmp_path / "short.qhf")
    (tmp_path / "bad.qhf").write_bytes(b"NOTMAGIC" + raw[8:])
    with pytest.raises(FormatError):
        open_features(tmp_path / "bad.qhf")
    with pytest.raises(ValueError):
        write_features(tmp_path / "x.qhf", np.zeros((1, 1)), layout="x" * 17)


def test_model_round_trip(tmp_path):
    m = SvmModel(w=np.array([0.5, -1.25, 3.0]), C=2.0, tol=1e-3, bias=True, objective=4.5)
    save_model(tmp_path / "m.qhsvm", m)
    back = load_model(tmp_path / "m.qhsvm")
    np.testing.assert_array_equal(back.w, m.w)
    assert (back.C, back.tol, back.bias, back.objective) == (2.0, 1e-3, True, 4.5)
    size = (tmp_path / "m.qhsvm").stat().st_size
    assert size == struct.calcsize("<8sIIQdd") + 8 * 3 + 8


def test_model_truncated(tmp_path):
    m = SvmModel(w=np.ones(4), C=1.0, tol=1e-3)
    save_model(tmp_path / "m.qhsvm", m)
    p = tmp_path / "t.qhsvm"
    p.write_bytes((tmp_path / "m.qhsvm").read_bytes()[:-12])
    with pytest.raises(FormatError):
        load_model(p)
