"""File formats: image ingestion/export, the binary feature container, model files.

Feature container layout (little-endian)::

    magic   8s   b"QHFEAT\\x00\\x01"
    version u32
    rows    u64
    cols    u64
    layout  16s  ASCII tag, NUL padded (e.g. b"quad-r1", b"pixels")
    data    rows*cols float64, row-major

Model file layout (little-endian)::

    magic     8s  b"QHSVM\\x00\\x00\\x01"
    version   u32
    flags     u32 bit 0 = last weight is an augmented bias
    d         u64
    C         f64
    tol       f64
    w         d float64
    objective f64
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .image import to_gray

FEATURE_MAGIC = b"QHFEAT\x00\x01"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<8sIQQ16s")

MODEL_MAGIC = b"QHSVM\x00\x00\x01"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<8sIIQdd")


class FormatError(ValueError):
    pass


# -- images -----------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Load an 8-bit gray or 24-bit RGB PNG/PGM as a float64 gray image in [0, 1]."""
    with PILImage.open(path) as im:
        if im.mode in ("L", "P", "1"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)
        elif im.mode in ("RGB", "RGBA"):
            arr = to_gray(np.asarray(im.convert("RGB"), dtype=np.float64))
        elif im.mode in ("I;16", "I;16B", "I"):
            raise FormatError(f"{path}: only 8-bit images are supported")
        else:
            arr = to_gray(np.asarray(im.convert("RGB"), dtype=np.float64))
    return arr / 255.0


def write_pgm(path, image, lo=None, hi=None) -> None:
    """Write a binary P5 PGM, linearly mapping [lo, hi] (default: data range) to 0..255."""
    image = np.asarray(image, dtype=np.float64)
    lo = image.min() if lo is None else lo
    hi = image.max() if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    data = np.clip(np.round((image - lo) * scale), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0]))
        fh.write(data.tobytes())


# -- feature container --------------------------------------------------------

def _encode_tag(tag: str) -> bytes:
    raw = tag.encode("ascii")
    if len(raw) > 16:
        raise ValueError(f"layout tag {tag!r} longer than 16 bytes")
    return raw.ljust(16, b"\x00")


class FeatureWriter:
    """Append rows to a feature container without holding the matrix in memory."""

    def __init__(self, path, cols: int, layout: str = ""):
        self.path = Path(path)
        self.cols = int(cols)
        self.layout = layout
        self.rows = 0
        self._fh = open(self.path, "wb")
        self._write_header()

    def _write_header(self):
        self._fh.seek(0)
        self._fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, self.rows,
                                            self.cols, _encode_tag(self.layout)))

    def append(self, block) -> None:
        block = np.ascontiguousarray(block, dtype="<f8")
        if block.ndim == 1:
            block = block[None, :]
        if block.shape[1] != self.cols:
            raise ValueError(f"block has {block.shape[1]} columns, container has {self.cols}")
        self._fh.seek(0, os.SEEK_END)
        self._fh.write(block.tobytes())
        self.rows += block.shape[0]

    def close(self) -> None:
        if self._fh.closed:
            return
        self._write_header()
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_features(path, X, layout: str = "") -> None:
    X = np.asarray(X, dtype=np.float64)
    with FeatureWriter(path, X.shape[1], layout) as w:
        w.append(X)


def read_feature_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_FEATURE_HEADER.size)
    if len(raw) < _FEATURE_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, cols, tag = _FEATURE_HEADER.unpack(raw)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: not a feature container")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    expected = _FEATURE_HEADER.size + 8 * rows * cols
    if os.path.getsize(path) != expected:
        raise FormatError(f"{path}: size does not match header ({rows}x{cols})")
    return {"rows": rows, "cols": cols, "layout": tag.rstrip(b"\x00").decode("ascii")}


def open_features(path, mmap: bool = True) -> np.ndarray:
    """Open a feature container; by default as a read-only memory map (out-of-core)."""
    h = read_feature_header(path)
    shape = (h["rows"], h["cols"])
    if mmap:
        return np.memmap(path, dtype="<f8", mode="r", offset=_FEATURE_HEADER.size, shape=shape)
    with open(path, "rb") as fh:
        fh.seek(_FEATURE_HEADER.size)
        return np.fromfile(fh, dtype="<f8", count=shape[0] * shape[1]).reshape(shape)


# -- model files ----------------------------------------------------------------

def save_model(path, model) -> None:
    w = np.ascontiguousarray(model.w, dtype="<f8")
    flags = 1 if model.bias else 0
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, flags, w.size,
                                    float(model.C), float(model.tol)))
        fh.write(w.tobytes())
        fh.write(struct.pack("<d", float(model.objective)))


def load_model(path):
    from .svm import SvmModel

    with open(path, "rb") as fh:
        raw = fh.read(_MODEL_HEADER.size)
        if len(raw) < _MODEL_HEADER.size:
            raise FormatError(f"{path}: truncated model header")
        magic, version, flags, d, C, tol = _MODEL_HEADER.unpack(raw)
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: not a model file")
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported model version {version}")
        body = fh.read(8 * d)
        tail = fh.read(8)
        if len(body) != 8 * d or len(tail) != 8:
            raise FormatError(f"{path}: truncated model body")
        w = np.frombuffer(body, dtype="<f8").astype(np.float64)
        (objective,) = struct.unpack("<d", tail)
    return SvmModel(w=w, C=C, tol=tol, bias=bool(flags & 1), objective=objective)


# -- sparse triplets ------------------------------------------------------------

def write_triplets(path, matrix) -> None:
    """Write a sparse matrix as ``rows cols nnz`` followed by ``row col value`` lines."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")


def read_triplets(path):
    import scipy.sparse as sp

    with open(path) as fh:
        n_rows, n_cols, nnz = (int(t) for t in fh.readline().split())
        body = np.loadtxt(fh, ndmin=2) if nnz else np.empty((0, 3))
    if body.shape[0] != nnz:
        raise FormatError(f"{path}: expected {nnz} triplets, found {body.shape[0]}")
    return sp.csr_matrix((body[:, 2], (body[:, 0].astype(np.int64), body[:, 1].astype(np.int64))),
                         shape=(n_rows, n_cols))
