"""Image synthesis: 1/f noise, structured images, natural patches, similarity warps."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, optimize

from .image import check_image, power_normalize, radial_frequency

IMAGE_SUFFIXES = (".png", ".pgm")


def derive_seed(*keys: int) -> int:
    """Order-independent child seed for a tuple of integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, dtype=np.uint64)[0])


def _pink_amplitude(shape) -> np.ndarray:
    r = radial_frequency(shape)
    amp = np.zeros_like(r)
    amp[r > 0] = 1.0 / r[r > 0]
    return amp


def _hermitian_phase(shape, rng) -> np.ndarray:
    """Uniform phases with phi(-k) = -phi(k).

    Self-conjugate bins (DC, Nyquist) must be real; they get phase 0 or pi
    with equal probability so no fixed pattern survives in the ensemble.
    """
    phi = rng.uniform(0.0, 2 * np.pi, size=shape)
    mirrored = np.roll(phi[::-1, ::-1], 1, axis=(0, 1))  # mirrored[k] = phi[-k mod N]
    out = np.mod(phi - mirrored, 2 * np.pi)
    self_conj = out == 0.0
    out[self_conj] = np.pi * rng.integers(0, 2, size=int(self_conj.sum()))
    return out


def sample_pink_noise(patch_size: int, seed: int) -> np.ndarray:
    """Random-phase image with amplitude exactly 1/|f| (DC removed), power-normalized."""
    if patch_size < 4:
        raise ValueError("patch_size must be >= 4")
    shape = (patch_size, patch_size)
    rng = np.random.default_rng(seed)
    spectrum = _pink_amplitude(shape) * np.exp(1j * _hermitian_phase(shape, rng))
    return power_normalize(np.real(np.fft.ifft2(spectrum)))


def _radial_bins(shape) -> np.ndarray:
    return np.rint(radial_frequency(shape) * max(shape)).astype(np.int64)


def reshape_radial_spectrum(image, iterations: int = 4) -> np.ndarray:
    """Rescale the spectrum so its mean amplitude per annulus follows 1/|f|.

    Phases and the relative amplitudes within an annulus are kept; DC is
    dropped. Gains are measured on the image's own frequency grid but applied
    to its mirror-symmetric 2H x 2W extension, which is periodic without
    wrap-around edges, so no border artifacts appear. Since the two grids do
    not align exactly, the correction is repeated `iterations` times.
    """
    image = check_image(image)
    H, W = image.shape
    bins = _radial_bins((H, W)).ravel()
    counts = np.bincount(bins)
    target = np.bincount(bins, weights=_pink_amplitude((H, W)).ravel()) / np.maximum(counts, 1)
    big_bins = np.rint(radial_frequency((2 * H, 2 * W)) * max(H, W)).astype(np.int64)
    big_bins = np.minimum(big_bins, counts.size - 1)
    img = image
    for _ in range(iterations):
        amp = np.abs(np.fft.fft2(img)).ravel()
        mean_amp = np.bincount(bins, weights=amp) / np.maximum(counts, 1)
        gain = np.zeros_like(mean_amp)
        ok = (mean_amp > 1e-12 * max(amp.max(), 1e-300)) & (np.arange(gain.size) > 0)
        gain[ok] = target[ok] / mean_amp[ok]
        top = np.hstack([img, img[:, ::-1]])
        tile = np.vstack([top, top[::-1]])
        img = np.real(np.fft.ifft2(np.fft.fft2(tile) * gain[big_bins]))[:H, :W]
    return power_normalize(img)


def _orientation(rng, cardinal_fraction: float, jitter: float) -> float:
    if rng.uniform() < cardinal_fraction:
        return float(rng.integers(2) * np.pi / 2 + rng.normal(0.0, jitter))
    return float(rng.uniform(0.0, np.pi))


def _supersampled_grid(n: int, factor: int):
    c = (np.arange(n * factor) + 0.5) / factor
    return np.meshgrid(c, c, indexing="ij")  # (row, col) in pixel units


def render_primitives(patch_size: int, rng, n_min: int = 2, n_max: int = 6, factor: int = 4,
                      cardinal_fraction: float = 0.9, jitter: float = 0.05) -> np.ndarray:
    """Anti-aliased lines, half-plane edges and filled rectangles with random contrast.

    Each primitive's orientation is horizontal/vertical (plus Gaussian
    `jitter`, radians) with probability `cardinal_fraction`, else uniform.
    """
    yy, xx = _supersampled_grid(patch_size, factor)
    canvas = np.zeros_like(xx)
    for _ in range(rng.integers(n_min, n_max + 1)):
        kind = rng.integers(3)
        contrast = rng.uniform(0.3, 1.0) * rng.choice([-1.0, 1.0])
        theta = _orientation(rng, cardinal_fraction, jitter)
        nx, ny = np.cos(theta), np.sin(theta)
        px, py = rng.uniform(0, patch_size, size=2)
        u = (xx - px) * nx + (yy - py) * ny
        v = -(xx - px) * ny + (yy - py) * nx
        if kind == 0:  # line segment
            half_len = rng.uniform(0.25, 0.8) * patch_size
            width = rng.uniform(0.7, 2.0)
            mask = (np.abs(u) <= width / 2) & (np.abs(v) <= half_len)
        elif kind == 1:  # step edge
            mask = u > 0
        else:  # rectangle
            a, b = rng.uniform(0.1, 0.45, size=2) * patch_size
            mask = (np.abs(u) <= a) & (np.abs(v) <= b)
        canvas = np.where(mask, canvas + contrast, canvas)
    return canvas.reshape(patch_size, factor, patch_size, factor).mean(axis=(1, 3))


def sample_structured(patch_size: int, seed: int, **render_kw) -> np.ndarray:
    """Procedural stand-in for natural patches, radially reshaped to a 1/f spectrum."""
    if patch_size < 4:
        raise ValueError("patch_size must be >= 4")
    rng = np.random.default_rng(seed)
    img = render_primitives(patch_size, rng, **render_kw)
    while not np.any(np.abs(img - img.mean()) > 1e-9):
        img = render_primitives(patch_size, rng, **render_kw)
    return reshape_radial_spectrum(img)


PATTERN_CLASSES = 6


def _bar(u, v, half_width):
    return (np.abs(u) <= half_width) & (np.abs(v) <= 1.0)


def sample_class_pattern(label: int, patch_size: int, seed: int, noise: float = 0.6,
                         factor: int = 4) -> np.ndarray:
    """One identity of a procedural shape class, in pink-noise clutter.

    Classes: 0 horizontal bar, 1 vertical bar, 2 plus, 3 diagonal cross,
    4 ring, 5 two dots over a bar. Each identity jitters the position, size,
    tilt and stroke width of its class shape; `noise` is the RMS of the added
    clutter relative to the shape. Power-normalized.
    """
    if not 0 <= label < PATTERN_CLASSES:
        raise ValueError(f"label must be in [0, {PATTERN_CLASSES})")
    if patch_size < 4:
        raise ValueError("patch_size must be >= 4")
    rng = np.random.default_rng(seed)
    n = patch_size
    yy, xx = _supersampled_grid(n, factor)
    cy, cx = n / 2 + rng.normal(0.0, 0.04 * n, size=2)
    size = 0.3 * n * np.exp(rng.normal(0.0, 0.1))
    tilt = rng.normal(0.0, 0.12)
    hw = 0.5 * max(1.0, 0.08 * n) * np.exp(rng.normal(0.0, 0.15)) / size
    u = ((xx - cx) * np.cos(tilt) + (yy - cy) * np.sin(tilt)) / size
    v = (-(xx - cx) * np.sin(tilt) + (yy - cy) * np.cos(tilt)) / size
    if label == 0:
        mask = _bar(v, u, hw)
    elif label == 1:
        mask = _bar(u, v, hw)
    elif label == 2:
        mask = _bar(v, u, hw) | _bar(u, v, hw)
    elif label == 3:
        a, b = (u + v) / np.sqrt(2), (u - v) / np.sqrt(2)
        mask = _bar(a, b, hw) | _bar(b, a, hw)
    elif label == 4:
        mask = np.abs(np.hypot(u, v) - 0.8) <= hw
    else:
        mask = ((np.hypot(u - 0.5, v + 0.3) <= 2 * hw) | (np.hypot(u + 0.5, v + 0.3) <= 2 * hw)
                | ((np.abs(v - 0.45) <= hw) & (np.abs(u) <= 0.6)))
    shape = power_normalize(mask.astype(np.float64).reshape(n, factor, n, factor).mean(axis=(1, 3)))
    return power_normalize(shape + noise * sample_pink_noise(n, derive_seed(seed, 1)))


def _silhouette_mask(n: int, rng, factor: int) -> np.ndarray:
    """Head, torso, two arms and two legs with random placement and pose."""
    yy, xx = _supersampled_grid(n, factor)
    cx = n / 2 + rng.normal(0.0, 0.05 * n)
    s = n * np.exp(rng.normal(0.0, 0.1))
    top = 0.5 * n - 0.42 * s + rng.normal(0.0, 0.03 * n)
    head_x = cx + rng.normal(0.0, 0.02 * s)
    head = np.hypot(xx - head_x, yy - (top + 0.09 * s)) <= 0.085 * s
    torso_w = 0.14 * s * np.exp(rng.normal(0.0, 0.15))
    hip = top + 0.5 * s
    torso = (np.abs(xx - cx) <= torso_w) & (yy >= top + 0.19 * s) & (yy <= hip)
    limbs = np.zeros_like(xx, dtype=bool)
    for side in (-1.0, 1.0):
        # leg: from the hip, swinging outwards by a random angle
        t = (yy - hip) / (0.35 * s)
        foot = cx + side * (0.06 * s + rng.uniform(-0.05, 0.2) * s)
        centre = cx + side * 0.06 * s + (foot - cx - side * 0.06 * s) * np.clip(t, 0, 1)
        limbs |= (np.abs(xx - centre) <= 0.055 * s) & (t >= 0) & (t <= 1)
        # arm: from the shoulder, hanging at a random angle
        angle = rng.uniform(0.0, 0.5)
        sx, sy = cx + side * torso_w, top + 0.21 * s
        along = (yy - sy) * np.cos(angle) + side * (xx - sx) * np.sin(angle)
        across = -(yy - sy) * np.sin(angle) + side * (xx - sx) * np.cos(angle)
        limbs |= (along >= 0) & (along <= 0.3 * s) & (np.abs(across) <= 0.04 * s)
    return (head | torso | limbs).astype(np.float64).reshape(n, factor, n, factor).mean(axis=(1, 3))


def sample_background(patch_size: int, seed: int) -> np.ndarray:
    """Clutter patch: random primitives over pink noise, power-normalized."""
    rng = np.random.default_rng(seed)
    img = power_normalize(render_primitives(patch_size, rng, cardinal_fraction=0.5))
    return power_normalize(img + sample_pink_noise(patch_size, derive_seed(seed, 1)))


def sample_silhouette(patch_size: int, seed: int, contrast: float = 1.0) -> np.ndarray:
    """Upright figure (head, torso, arms, legs) pasted over clutter.

    The figure is filled with its own clutter texture and offset from the
    background by `contrast` times a random sign, so neither polarity nor
    texture identifies the class. Power-normalized.
    """
    if patch_size < 8:
        raise ValueError("patch_size must be >= 8")
    rng = np.random.default_rng(seed)
    mask = _silhouette_mask(patch_size, rng, 4)
    fill = sample_background(patch_size, derive_seed(seed, 2))
    back = sample_background(patch_size, derive_seed(seed, 3))
    polarity = rng.choice([-1.0, 1.0])
    img = mask * (fill + polarity * contrast) + (1.0 - mask) * back
    return power_normalize(img)


def list_images(source_dir) -> list[Path]:
    d = Path(source_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def ingest_patches(source_dir, patch_size: int, count: int, seed: int) -> list[np.ndarray]:
    """Random power-normalized gray patches from the images in `source_dir` (sorted by name)."""
    from .io import read_image

    files = list_images(source_dir)
    if not files:
        raise FileNotFoundError(f"no PNG/PGM images in {source_dir}")
    images = []
    for f in files:
        try:
            img = read_image(f)
        except (OSError, ValueError):
            continue
        if img.shape[0] >= patch_size and img.shape[1] >= patch_size:
            images.append(img)
    if not images:
        raise ValueError(f"no readable image in {source_dir} is at least {patch_size}x{patch_size}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        img = images[rng.integers(len(images))]
        i = rng.integers(img.shape[0] - patch_size + 1)
        j = rng.integers(img.shape[1] - patch_size + 1)
        out.append(power_normalize(img[i:i + patch_size, j:j + patch_size]))
    return out


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str
    patch_size: int
    count: int
    seed: int
    source_dir: str | None = None

    def __post_init__(self):
        if self.kind not in ("pink_noise", "natural_patches", "structured_procedural"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if self.count < 1 or self.patch_size < 4:
            raise ValueError("count must be >= 1 and patch_size >= 4")
        if self.kind == "natural_patches" and self.source_dir is None:
            raise ValueError("natural_patches needs source_dir")


def generate_ensemble(spec: EnsembleSpec) -> np.ndarray:
    """Stack of `count` samples; sample i is seeded by derive_seed(spec.seed, i)."""
    if spec.kind == "natural_patches":
        return np.array(ingest_patches(spec.source_dir, spec.patch_size, spec.count, spec.seed))
    fn = sample_pink_noise if spec.kind == "pink_noise" else sample_structured
    return np.array([fn(spec.patch_size, derive_seed(spec.seed, i)) for i in range(spec.count)])


def radial_amplitude_spectrum(images):
    """Mean Fourier amplitude per integer radius bin, averaged over images.

    Returns (bin radii in cycles/pixel, mean amplitude); bin 0 is DC.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    shape = images.shape[1:]
    bins = _radial_bins(shape).ravel()
    counts = np.bincount(bins)
    amp = np.abs(np.fft.fft2(images)).mean(axis=0).ravel()
    mean_amp = np.bincount(bins, weights=amp) / np.maximum(counts, 1)
    return np.arange(counts.size) / max(shape), mean_amp


def spectral_slope(images, band=None) -> float:
    """Least-squares slope of log mean amplitude against log frequency over `band` bins.

    The default band runs from bin 2 to the last bin below Nyquist.
    """
    f, a = radial_amplitude_spectrum(images)
    n = np.asarray(images).shape[-1]
    lo, hi = band if band is not None else (2, n // 2 - 1)
    sel = slice(lo, hi + 1)
    return float(np.polyfit(np.log(f[sel]), np.log(a[sel]), 1)[0])


def pixel_correlation(images, displacement: int) -> float:
    """Pearson correlation between pixels `displacement` apart horizontally, pooled over images."""
    images = np.asarray(images, dtype=np.float64)
    a = images[:, :, :-displacement].ravel()
    b = images[:, :, displacement:].ravel()
    return float(np.corrcoef(a, b)[0, 1])


# -- similarity warps ------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityTransform:
    """Maps (x, y) points to ``scale * R(rotation) @ p + translation``."""

    scale: float = 1.0
    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        return self.scale * np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix.T + np.asarray(self.translation)

    def inverse(self) -> "SimilarityTransform":
        inv = SimilarityTransform(1.0 / self.scale, -self.rotation)
        t = -inv.matrix @ np.asarray(self.translation)
        return SimilarityTransform(inv.scale, inv.rotation, (float(t[0]), float(t[1])))

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """``self.compose(other)(p) == self(other(p))``."""
        t = self.matrix @ np.asarray(other.translation) + np.asarray(self.translation)
        return SimilarityTransform(self.scale * other.scale, self.rotation + other.rotation,
                                   (float(t[0]), float(t[1])))

    def rms_displacement(self, points) -> float:
        pts = np.asarray(points, dtype=np.float64)
        return float(np.sqrt(np.mean(np.sum((self.apply(pts) - pts) ** 2, axis=1))))


def default_reference_points(shape) -> np.ndarray:
    """The four corner pixel centres and the image centre, as (x, y)."""
    h, w = shape
    return np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1], [(w - 1) / 2, (h - 1) / 2]], dtype=np.float64)


@dataclass(frozen=True)
class WarpSpec:
    target_rms: float
    reference_points: np.ndarray
    seed: int = 0
    translate: bool = True

    def __post_init__(self):
        if self.target_rms < 0:
            raise ValueError("target_rms must be >= 0")
        pts = np.asarray(self.reference_points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("need at least three (x, y) reference points")
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9 * max(1.0, np.abs(centered).max())) < 2:
            raise ValueError("reference points are collinear")
        object.__setattr__(self, "reference_points", pts)


def _tangent_transform(direction, lam, centroid, spread) -> SimilarityTransform:
    ds, dth, dx, dy = direction
    scale = float(np.exp(lam * ds / spread))
    rot = float(lam * dth / spread)
    partial = SimilarityTransform(scale, rot)
    t = centroid - partial.matrix @ centroid + lam * np.array([dx, dy])
    return SimilarityTransform(scale, rot, (float(t[0]), float(t[1])))


def sample_similarity_warp(spec: WarpSpec) -> SimilarityTransform:
    """Random similarity whose RMS displacement of the reference points equals the target.

    Direction: standard normal (log-scale, rotation, dx, dy), with scale and
    rotation measured in pixels at the points' RMS radius about their centroid
    so all four components move points by comparable amounts. The step length
    along that direction is found by root finding. With ``translate=False``
    the warp only scales and rotates about the points' centroid.
    """
    if spec.target_rms == 0:
        return SimilarityTransform()
    pts = spec.reference_points
    centroid = pts.mean(axis=0)
    spread = float(np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1))))
    direction = np.random.default_rng(spec.seed).standard_normal(4)
    if not spec.translate:
        direction[2:] = 0.0

    def excess(lam):
        return _tangent_transform(direction, lam, centroid, spread).rms_displacement(pts) - spec.target_rms

    hi = spec.target_rms / max(np.linalg.norm(direction), 1e-12)
    while excess(hi) < 0:
        hi *= 2.0
    lam = optimize.brentq(excess, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return _tangent_transform(direction, lam, centroid, spread)


def warp_image(image, t: SimilarityTransform) -> np.ndarray:
    """Inverse-mapped bilinear resampling; samples outside the image read as 0."""
    image = check_image(image)
    h, w = image.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    src = t.inverse().apply(np.column_stack([xx.ravel(), yy.ravel()]))
    coords = np.vstack([src[:, 1], src[:, 0]])
    return ndimage.map_coordinates(image, coords, order=1, mode="grid-constant", cval=0.0).reshape(h, w)


def synthesize_set(base, per_example: int, spec: WarpSpec, include_identity: bool = False,
                   return_transforms: bool = False):
    """`per_example` warped copies of every base image, base-major.

    Copy c of base b uses the warp seeded by derive_seed(spec.seed, b, c).
    With `include_identity` the first copy of each base is left unwarped.
    """
    if per_example < 1:
        raise ValueError("per_example must be >= 1")
    out, transforms = [], []
    for b, img in enumerate(base):
        for c in range(per_example):
            if include_identity and c == 0:
                t = SimilarityTransform()
            else:
                sub = WarpSpec(spec.target_rms, spec.reference_points, derive_seed(spec.seed, b, c), spec.translate)
                t = sample_similarity_warp(sub)
            out.append(warp_image(img, t) if t != SimilarityTransform() else np.array(img, dtype=np.float64))
            transforms.append(t)
    return (out, transforms) if return_transforms else out


MANIFEST_FIELDS = ("id", "seed", "label", "scale", "rotation", "tx", "ty")


def write_manifest(path, entries) -> None:
    """Tab-separated sample manifest: id, seed, label and the warp parameters."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, delimiter="\t", lineterminator="\n")
        w.writeheader()
        for e in entries:
            w.writerow({k: (repr(float(e[k])) if k in ("scale", "rotation", "tx", "ty") else e[k])
                        for k in MANIFEST_FIELDS})


def read_manifest(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh, delimiter="\t"))
    for r in rows:
        r["seed"] = int(r["seed"])
        for k in ("scale", "rotation", "tx", "ty"):
            r[k] = float(r[k])
    return rows


def manifest_entry(sample_id: str, seed: int, label, t: SimilarityTransform | None = None) -> dict:
    t = t or SimilarityTransform()
    return {"id": sample_id, "seed": seed, "label": label, "scale": t.scale, "rotation": t.rotation,
            "tx": t.translation[0], "ty": t.translation[1]}
