"""Experiment runners: noise vs structure, alignment sweep, desk-scale detection.

Every runner takes an :class:`ExperimentConfig`, returns :class:`ResultRow`
records in a deterministic order and, when an output directory is set,
streams them to ``results.csv`` and writes sample manifests and trained
models next to it.
"""

from __future__ import annotations

import csv
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .features import make_extractor
from .image import whiten
from .io import FeatureWriter, open_features, save_model
from .quad import LocalWindow
from .svm import DualCDClassifier
from .synth import (
    PATTERN_CLASSES,
    WarpSpec,
    default_reference_points,
    derive_seed,
    ingest_patches,
    list_images,
    manifest_entry,
    sample_background,
    sample_class_pattern,
    sample_pink_noise,
    sample_silhouette,
    sample_structured,
    synthesize_set,
    write_manifest,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = ("noise_vs_structured", "alignment_sweep", "detect_desk")
FEATURE_NAMES = ("pixels", "hog_baseline", "hog_conv", "hog_reform", "quad")
WORKERS_ENV = "QUADHOG_WORKERS"
MIN_DETECT_PER_CLASS = 100

# split tags mixed into every generator seed, so train and test never share one
TRAIN, TEST = 0, 1

_DEFAULTS = {
    "noise_vs_structured": dict(feature=("pixels", "quad"), window_radius=1, train_sizes=(2000,),
                                rms_levels=(0.0,), C=10.0, patch_size=16, test_size=2000),
    "alignment_sweep": dict(feature=("hog_baseline", "quad"), window_radius=None,
                            train_sizes=(300, 1500, 15000), rms_levels=(0.0, 2.0, 5.0, 10.0), C=1.0,
                            patch_size=32, test_size=600, base_size=150),
    "detect_desk": dict(feature=("pixels", "hog_baseline", "quad"), window_radius=1, train_sizes=(2000,),
                        rms_levels=(1.0,), C=1.0, c_grid=(0.1, 1.0, 10.0), patch_size=32, test_size=1000),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one experiment run.

    `feature` holds one or more extractor names. `window_radius` applies to
    the quad feature; ``None`` ties it to the warp RMS level (side = RMS
    rounded up to odd, radius >= 1). For detection, `train_sizes[-1]` is the
    number of warped training positives and `rms_levels[-1]` their warp size.
    A nonempty `c_grid` replaces the fixed `C` by a per-cell validation choice.
    Feature matrices larger than `memory_budget` bytes are streamed to disk
    under `output_dir` (or a temporary directory) and trained from a memory map.
    """

    experiment: str
    feature: tuple = ("quad",)
    window_radius: int | None = 1
    train_sizes: tuple = (2000,)
    rms_levels: tuple = (0.0,)
    C: float = 1.0
    c_grid: tuple = ()
    tol: float = 1e-2
    seed: int = 0
    output_dir: str | None = None
    corpus_dir: str | None = None
    memory_budget: int = 2 * 1024 ** 3
    patch_size: int = 16
    test_size: int = 2000
    base_size: int = 150
    per_example_cap: int = 100
    warps_per_positive: int = 20
    max_epochs: int = 300
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        feats = (self.feature,) if isinstance(self.feature, str) else tuple(self.feature)
        if not feats or any(f not in FEATURE_NAMES for f in feats):
            raise ValueError(f"feature must be drawn from {FEATURE_NAMES}, got {feats}")
        object.__setattr__(self, "feature", feats)
        sizes = tuple(int(s) for s in self.train_sizes)
        if not sizes or any(s < 1 for s in sizes) or list(sizes) != sorted(set(sizes)):
            raise ValueError(f"train_sizes must be nonempty, positive and ascending, got {sizes}")
        object.__setattr__(self, "train_sizes", sizes)
        levels = tuple(float(r) for r in self.rms_levels)
        if not levels or any(not r >= 0 for r in levels):
            raise ValueError(f"rms_levels must be nonempty and non-negative, got {levels}")
        object.__setattr__(self, "rms_levels", levels)
        grid = tuple(float(c) for c in self.c_grid)
        if not (self.C > 0 and self.tol > 0 and all(c > 0 for c in grid)):
            raise ValueError("C, c_grid and tol must be positive")
        object.__setattr__(self, "c_grid", grid)
        if self.window_radius is not None and int(self.window_radius) < 0:
            raise ValueError("window_radius must be >= 0")
        for name in ("patch_size", "test_size", "base_size", "per_example_cap", "warps_per_positive",
                     "max_epochs", "workers", "memory_budget"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @classmethod
    def for_experiment(cls, experiment: str, **overrides) -> "ExperimentConfig":
        """Config with the experiment's default grid, updated by `overrides`."""
        if experiment not in _DEFAULTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        params = dict(_DEFAULTS[experiment])
        params.update({k: v for k, v in overrides.items() if v is not None})
        return cls(experiment=experiment, **params)

    def with_env(self) -> "ExperimentConfig":
        """Apply the worker-count override from the environment, if set."""
        raw = os.environ.get(WORKERS_ENV)
        if raw is None or raw.strip() == "":
            return self
        try:
            workers = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
        return replace(self, workers=workers)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    feature: str
    train_size: int
    rms_level: float
    test_accuracy: float
    train_seconds: float
    feature_dim: int
    objective: float
    eer: float = float("nan")

    def __post_init__(self):
        if not 0.0 <= self.test_accuracy <= 1.0:
            raise ValueError(f"test_accuracy {self.test_accuracy} outside [0, 1]")


RESULT_FIELDS = tuple(f.name for f in fields(ResultRow))
_INT_FIELDS = {"train_size", "feature_dim"}
_FLOAT_FIELDS = {"rms_level", "test_accuracy", "train_seconds", "objective", "eer"}


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class CsvAppender:
    """Header on open, then one flushed line per appended row."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        self._writer.writerow(RESULT_FIELDS)
        self._fh.flush()

    def append(self, row: ResultRow) -> None:
        self._writer.writerow([_format(v) for v in asdict(row).values()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_csv(rows, path) -> None:
    with CsvAppender(path) as out:
        for row in rows:
            out.append(row)


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for rec in reader:
            kw = {}
            for k, v in rec.items():
                kw[k] = int(v) if k in _INT_FIELDS else float(v) if k in _FLOAT_FIELDS else v
            out.append(ResultRow(**kw))
    return out


# -- shared pipeline ------------------------------------------------------------

def window_for_rms(rms: float) -> LocalWindow:
    """Window whose side matches the RMS error, rounded up to odd, radius >= 1."""
    return LocalWindow(max(1, LocalWindow.from_side(rms).radius))


def _extractor(name: str, cfg: ExperimentConfig, rms: float):
    if name == "quad":
        radius = window_for_rms(rms).radius if cfg.window_radius is None else int(cfg.window_radius)
        return make_extractor("quad", radius=radius)
    return make_extractor(name)


class _Workspace:
    """Where spilled feature matrices and models go for one run."""

    def __init__(self, cfg: ExperimentConfig):
        self.root = Path(cfg.output_dir) if cfg.output_dir else None
        self._tmp = None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def scratch(self) -> Path:
        if self.root is not None:
            d = self.root / "features"
            d.mkdir(exist_ok=True)
            return d
        if self._tmp is None:
            import tempfile
            self._tmp = tempfile.TemporaryDirectory(prefix="quadhog-")
        return Path(self._tmp.name)

    def cleanup(self):
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None


def _features(extractor, images, budget: int, spill_path: Path, chunk: int = 256):
    """Training features scaled to unit mean squared row norm, and the scale used.

    Small matrices stay in memory; larger ones are written to `spill_path`
    and returned as a memory map (two extraction passes: norms, then rows).
    """
    n = len(images)
    cols = extractor.n_features_out_
    if n * cols * 8 <= budget:
        X = extractor.transform(np.asarray(images))
        scale = 1.0 / np.sqrt(max(np.einsum("ij,ij->", X, X) / n, 1e-300))
        X *= scale
        return X, scale
    logger.info("spilling %d x %d features to %s", n, cols, spill_path)
    total = 0.0
    for start in range(0, n, chunk):
        F = extractor.transform(np.asarray(images[start:start + chunk]))
        total += float(np.einsum("ij,ij->", F, F))
    scale = 1.0 / np.sqrt(max(total / n, 1e-300))
    with FeatureWriter(spill_path, cols, layout=type(extractor).__name__[:16]) as fw:
        for start in range(0, n, chunk):
            fw.append(extractor.transform(np.asarray(images[start:start + chunk])) * scale)
    return open_features(spill_path), scale


def _decisions(clf, extractor, scale, images, chunk: int = 256) -> np.ndarray:
    parts = [clf.decision_function(extractor.transform(np.asarray(images[s:s + chunk])) * scale)
             for s in range(0, len(images), chunk)]
    return np.concatenate(parts, axis=0)


def _validation_C(cfg, X, y, groups) -> float:
    """C from `cfg.c_grid` that scores best on a held-out fifth of the groups.

    Binary problems are scored by equal-error rate, others by accuracy.
    """
    uniq = np.unique(groups)
    held = np.random.default_rng(derive_seed(cfg.seed, 10)).permutation(uniq)[:max(1, uniq.size // 5)]
    val = np.isin(groups, held)
    tr_idx, val_idx = np.flatnonzero(~val), np.flatnonzero(val)
    Xtr, Xval = np.asarray(X[tr_idx]), np.asarray(X[val_idx])
    binary = np.unique(y).size == 2
    best, best_loss = None, np.inf
    for C in cfg.c_grid:
        clf = DualCDClassifier(C=C, tol=cfg.tol, max_epochs=cfg.max_epochs, random_state=cfg.seed)
        clf.fit(Xtr, y[tr_idx])
        if binary:
            loss = equal_error_rate(clf.decision_function(Xval), y[val_idx] == clf.classes_[1])
        else:
            loss = 1.0 - float(np.mean(clf.predict(Xval) == y[val_idx]))
        logger.info("C=%g validation loss %.4f", C, loss)
        if loss < best_loss:
            best, best_loss = C, loss
    return float(best)


def _train_eval(cfg, ws, name, tag, rms, train_imgs, y_train, test_imgs, y_test, groups=None):
    """Extract, train, score one grid cell. Returns (row fields, test decision values).

    Features are scaled by one training-set constant so that a given C means
    the same amount of regularization for every extractor. With a nonempty
    `cfg.c_grid`, C is picked per cell on held-out training groups (`groups`
    keeps warped copies of one base image together) before the final fit.
    """
    extractor = _extractor(name, cfg, rms).fit(np.asarray(train_imgs[:1]))
    spill = ws.scratch() / f"{tag}.qhf"
    X, scale = _features(extractor, train_imgs, cfg.memory_budget, spill)
    y_train = np.asarray(y_train)
    t0 = time.perf_counter()
    C = cfg.C
    if cfg.c_grid:
        C = _validation_C(cfg, X, y_train, np.arange(y_train.size) if groups is None else np.asarray(groups))
    clf = DualCDClassifier(C=C, tol=cfg.tol, max_epochs=cfg.max_epochs, random_state=cfg.seed)
    clf.fit(X, y_train)
    seconds = time.perf_counter() - t0
    del X
    if spill.exists():
        spill.unlink()
    scores = _decisions(clf, extractor, scale, test_imgs)
    if scores.ndim == 1:
        pred = clf.classes_[(scores > 0).astype(int)]
    else:
        pred = clf.classes_[np.argmax(scores, axis=1)]
    acc = float(np.mean(pred == np.asarray(y_test)))
    if ws.root is not None:
        mdir = ws.root / "models"
        mdir.mkdir(exist_ok=True)
        for k, model in enumerate(clf.models_):
            # fold the feature scale in, so saved models score raw features
            w = model.w.copy()
            w[:extractor.n_features_out_] *= scale
            save_model(mdir / f"{tag}-{k}.qhsvm", replace(model, w=w))
    return dict(test_accuracy=acc, train_seconds=seconds, feature_dim=extractor.n_features_out_,
                objective=clf.objective_), scores


def _run_cells(cfg: ExperimentConfig, cells, fn) -> list:
    """Run `fn` over `cells` on up to cfg.workers threads; rows stream out in cell order."""
    ws = _Workspace(cfg)
    out = []
    writer = CsvAppender(ws.root / "results.csv") if ws.root is not None else None
    try:
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
            for row in pool.map(lambda c: fn(ws, c), cells):
                rows = row if isinstance(row, list) else [row]
                for r in rows:
                    out.append(r)
                    if writer is not None:
                        writer.append(r)
    finally:
        if writer is not None:
            writer.close()
        ws.cleanup()
    return out


def _write_manifest(cfg, name, entries):
    if cfg.output_dir:
        d = Path(cfg.output_dir) / "manifests"
        d.mkdir(parents=True, exist_ok=True)
        write_manifest(d / f"{name}.tsv", entries)


# -- natural vs noise -----------------------------------------------------------

def _structured_class(cfg, split, count):
    if cfg.corpus_dir:
        seed = derive_seed(cfg.seed, split, 1)
        return ingest_patches(cfg.corpus_dir, cfg.patch_size, count, seed), [seed] * count
    seeds = [derive_seed(cfg.seed, split, 1, i) for i in range(count)]
    return [sample_structured(cfg.patch_size, s) for s in seeds], seeds


def _noise_split(cfg, split, count):
    n_pos = count // 2
    n_neg = count - n_pos
    pos, pos_seeds = _structured_class(cfg, split, n_pos)
    neg_seeds = [derive_seed(cfg.seed, split, 0, i) for i in range(n_neg)]
    neg = [sample_pink_noise(cfg.patch_size, s) for s in neg_seeds]
    images = np.array(pos + neg)
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    name = "train" if split == TRAIN else "test"
    entries = ([manifest_entry(f"{name}-s{i}", s, "structured") for i, s in enumerate(pos_seeds)]
               + [manifest_entry(f"{name}-n{i}", s, "noise") for i, s in enumerate(neg_seeds)])
    return images, y, entries


def balanced_shuffle(y, seed) -> np.ndarray:
    """Random labels with each true class split evenly between +1 and -1.

    The shuffled labels are then uncorrelated with the true ones by
    construction, not just in expectation.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    out = np.empty(y.shape, dtype=np.float64)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        half = idx.size // 2
        out[idx] = rng.permutation(np.r_[np.ones(half), -np.ones(idx.size - half)])
    return out


def run_noise_vs_structured(cfg: ExperimentConfig) -> list[ResultRow]:
    """Structured (or corpus) patches against 1/f noise, pixel and quad features.

    Also reports the quad feature trained on shuffled labels (see
    :func:`balanced_shuffle`), as feature ``quad_shuffled``; it should score
    at chance.
    """
    if cfg.experiment != "noise_vs_structured":
        raise ValueError("config is not a noise_vs_structured config")
    if cfg.corpus_dir:
        list_images(cfg.corpus_dir)
    n_train = cfg.train_sizes[-1]
    Xtr, ytr, man_tr = _noise_split(cfg, TRAIN, n_train)
    Xte, yte, man_te = _noise_split(cfg, TEST, cfg.test_size)
    _write_manifest(cfg, "noise_train", man_tr)
    _write_manifest(cfg, "noise_test", man_te)
    shuffled = balanced_shuffle(ytr, derive_seed(cfg.seed, 7))
    cells = [(f, ytr) for f in ("pixels", "quad")] + [("quad_shuffled", shuffled)]

    def cell(ws, c):
        name, labels = c
        fields_, _ = _train_eval(cfg, ws, name.replace("_shuffled", ""), f"noise-{name}", 0.0,
                                 Xtr, labels, Xte, yte)
        return ResultRow(cfg.experiment, name, n_train, 0.0, **fields_)

    return _run_cells(cfg, cells, cell)


# -- alignment sweep ------------------------------------------------------------

def _pattern_base(cfg, split, count):
    labels = np.arange(count) % PATTERN_CLASSES
    seeds = [derive_seed(cfg.seed, split, 2, i) for i in range(count)]
    imgs = [sample_class_pattern(int(k), cfg.patch_size, s) for k, s in zip(labels, seeds)]
    return imgs, labels, seeds


def _corpus_base(cfg):
    root = Path(cfg.corpus_dir)
    classes = sorted(d for d in root.iterdir() if d.is_dir())
    if len(classes) < 2:
        raise ValueError(f"{root}: need one subdirectory per class (at least two)")
    from .io import read_image
    from .image import power_normalize
    from scipy import ndimage
    items = []
    for k, d in enumerate(classes):
        for path in list_images(d):
            img = read_image(path)
            if img.shape != (cfg.patch_size, cfg.patch_size):
                zoom = (cfg.patch_size / img.shape[0], cfg.patch_size / img.shape[1])
                img = ndimage.zoom(img, zoom, order=1)[:cfg.patch_size, :cfg.patch_size]
            items.append((power_normalize(img), k, path.name))
    return items


def sweep_base_sets(cfg: ExperimentConfig):
    """Disjoint train/test identities: (train_imgs, train_labels, test_imgs, test_labels, manifests)."""
    if cfg.corpus_dir:
        items = _corpus_base(cfg)
        order = np.random.default_rng(derive_seed(cfg.seed, 3)).permutation(len(items))
        n_test = max(1, len(items) // 5)
        te, tr = order[:n_test], order[n_test:]
        pick = lambda idx: ([items[i][0] for i in idx], np.array([items[i][1] for i in idx]),
                            [manifest_entry(items[i][2], 0, items[i][1]) for i in idx])
        tr_imgs, tr_y, tr_man = pick(tr)
        te_imgs, te_y, te_man = pick(te)
        return tr_imgs, tr_y, te_imgs, te_y, (tr_man, te_man)
    tr_imgs, tr_y, tr_seeds = _pattern_base(cfg, TRAIN, cfg.base_size)
    te_imgs, te_y, te_seeds = _pattern_base(cfg, TEST, cfg.test_size)
    tr_man = [manifest_entry(f"train-{i}", s, int(k)) for i, (s, k) in enumerate(zip(tr_seeds, tr_y))]
    te_man = [manifest_entry(f"test-{i}", s, int(k)) for i, (s, k) in enumerate(zip(te_seeds, te_y))]
    return tr_imgs, tr_y, te_imgs, te_y, (tr_man, te_man)


def per_example_counts(train_sizes, base_count: int, cap: int) -> list[int]:
    """Warped copies per base identity for each training size."""
    out = []
    for s in train_sizes:
        if s % base_count:
            raise ValueError(f"train size {s} is not a multiple of the {base_count} base identities")
        k = s // base_count
        if k > cap:
            raise ValueError(f"train size {s} needs {k} copies per identity; the cap is {cap}")
        out.append(k)
    return out


def run_alignment_sweep(cfg: ExperimentConfig) -> list[ResultRow]:
    """Accuracy over (rms level, train size, feature).

    Training sets are warped copies of a fixed set of base identities (the
    first copy of each unwarped); test images are unseen identities warped
    once at the same RMS level.
    """
    if cfg.experiment != "alignment_sweep":
        raise ValueError("config is not an alignment_sweep config")
    tr_imgs, tr_y, te_imgs, te_y, (tr_man, te_man) = sweep_base_sets(cfg)
    copies = per_example_counts(cfg.train_sizes, len(tr_imgs), cfg.per_example_cap)
    _write_manifest(cfg, "sweep_train_base", tr_man)
    _write_manifest(cfg, "sweep_test_base", te_man)
    ref = default_reference_points((cfg.patch_size, cfg.patch_size))
    cells = [(rms, size, k, feat) for rms in cfg.rms_levels
             for size, k in zip(cfg.train_sizes, copies) for feat in cfg.feature]

    def cell(ws, c):
        rms, size, k, feat = c
        spec = WarpSpec(rms, ref, derive_seed(cfg.seed, TRAIN, 4, int(rms * 1000)))
        train = synthesize_set(tr_imgs, k, spec, include_identity=True)
        test_spec = WarpSpec(rms, ref, derive_seed(cfg.seed, TEST, 4, int(rms * 1000)))
        test = synthesize_set(te_imgs, 1, test_spec)
        fields_, _ = _train_eval(cfg, ws, feat, f"sweep-{feat}-{size}-{rms:g}", rms,
                                 train, np.repeat(tr_y, k), test, te_y)
        return ResultRow(cfg.experiment, feat, size, rms, **fields_)

    return _run_cells(cfg, cells, cell)


# -- detection ------------------------------------------------------------------

def precision_recall(scores, labels):
    """Precision and recall at every distinct threshold, predicting positive when score >= t.

    Thresholds ascend from -inf (everything positive). Returns
    (thresholds, precision, recall, false positive rate).
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both positives and negatives")
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]  # end of each tie group
    tp, fp = tp[last], fp[last]
    thresholds = np.r_[-np.inf, s[last][::-1]]
    tp = np.r_[n_pos, tp[::-1]]
    fp = np.r_[n_neg, fp[::-1]]
    precision = tp / np.maximum(tp + fp, 1)
    precision[tp + fp == 0] = 1.0
    recall = tp / n_pos
    return thresholds, precision, recall, fp / n_neg


def equal_error_rate(scores, labels) -> float:
    """Rate where false positives and misses balance, interpolated between sweep points."""
    _, _, recall, fpr = precision_recall(scores, labels)
    fnr = 1.0 - recall
    diff = fpr - fnr  # +1 at threshold -inf, falls as the threshold rises
    i = int(np.flatnonzero(diff <= 0)[0]) if np.any(diff <= 0) else diff.size - 1
    if i == 0 or diff[i] == 0:
        return float(fpr[i])
    t = diff[i - 1] / (diff[i - 1] - diff[i])
    return float(fpr[i - 1] + t * (fpr[i] - fpr[i - 1]))


def _load_resized(path, size):
    from scipy import ndimage

    from .image import power_normalize
    from .io import read_image
    img = read_image(path)
    if img.shape != (size, size):
        img = ndimage.zoom(img, (size / img.shape[0], size / img.shape[1]), order=1)[:size, :size]
    return power_normalize(img)


def _detect_positives(cfg, split, count):
    """Base positives and their ids: procedural figures, or corpus files split 80/20 by name."""
    if cfg.corpus_dir:
        files = list_images(Path(cfg.corpus_dir) / "positive")
        order = np.random.default_rng(derive_seed(cfg.seed, 9)).permutation(len(files))
        n_test = max(1, len(files) // 5)
        chosen = order[n_test:] if split == TRAIN else order[:n_test]
        if chosen.size < 1:
            raise ValueError("corpus has too few positives for a train/test split")
        picks = [files[i] for i in np.resize(chosen, count)]
        return [_load_resized(f, cfg.patch_size) for f in picks], [0] * count, [f.name for f in picks]
    seeds = [derive_seed(cfg.seed, split, 5, i) for i in range(count)]
    return [sample_silhouette(cfg.patch_size, s) for s in seeds], seeds, None


def _detect_negatives(cfg, split, count):
    if cfg.corpus_dir:
        seed = derive_seed(cfg.seed, split, 8)
        return ingest_patches(Path(cfg.corpus_dir) / "negative", cfg.patch_size, count, seed), [seed] * count
    seeds = [derive_seed(cfg.seed, split, 8, i) for i in range(count)]
    return [sample_background(cfg.patch_size, s) for s in seeds], seeds


def _detect_split(cfg, split, n_pos):
    """Positives and twice as many negatives.

    Training positives are `warps_per_positive` copies of each base figure
    (scale and rotation only, first copy unwarped); test positives are
    distinct, unwarped figures.
    """
    name = "train" if split == TRAIN else "test"
    if split == TRAIN:
        k = cfg.warps_per_positive
        base, seeds, ids = _detect_positives(cfg, split, -(-n_pos // k))
        ref = default_reference_points((cfg.patch_size, cfg.patch_size))
        spec = WarpSpec(cfg.rms_levels[-1], ref, derive_seed(cfg.seed, split, 6), translate=False)
        pos, transforms = synthesize_set(base, k, spec, include_identity=True, return_transforms=True)
        pos, transforms = pos[:n_pos], transforms[:n_pos]
    else:
        k = 1
        pos, seeds, ids = _detect_positives(cfg, split, n_pos)
        transforms = [None] * n_pos
    ids = ids or [f"{name}-p{j}" for j in range(len(seeds))]
    entries = [manifest_entry(f"{ids[j // k]}-{j % k}", seeds[j // k], "positive", t)
               for j, t in enumerate(transforms)]
    neg, neg_seeds = _detect_negatives(cfg, split, 2 * n_pos)
    entries += [manifest_entry(f"{name}-n{i}", s, "negative") for i, s in enumerate(neg_seeds)]
    images = np.array(pos + neg)
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    return images, y, entries


def run_detect_desk(cfg: ExperimentConfig) -> list[ResultRow]:
    """Figure-vs-clutter detection with a 1:2 positive:negative split.

    With `corpus_dir` set, positives come from its ``positive/`` images
    (resized to the patch) and negatives are random patches of its
    ``negative/`` images.

    Writes ``pr_<feature>.csv`` (threshold, precision, recall) per feature
    when an output directory is set; each row carries the feature's
    equal-error rate.
    """
    if cfg.experiment != "detect_desk":
        raise ValueError("config is not a detect_desk config")
    n_pos = cfg.train_sizes[-1]
    n_test_pos = cfg.test_size
    if min(n_pos, n_test_pos) < MIN_DETECT_PER_CLASS:
        raise ValueError(f"detection needs at least {MIN_DETECT_PER_CLASS} examples per class")
    Xtr, ytr, man_tr = _detect_split(cfg, TRAIN, n_pos)
    # warped copies of one figure share a group; negatives are their own groups
    gtr = np.r_[np.arange(n_pos) // cfg.warps_per_positive, n_pos + np.arange(2 * n_pos)]
    Xte, yte, man_te = _detect_split(cfg, TEST, n_test_pos)
    _write_manifest(cfg, "detect_train", man_tr)
    _write_manifest(cfg, "detect_test", man_te)

    def cell(ws, feat):
        # whitening stands in for contrast normalization, which only hog_baseline has built in
        prep = (lambda A: A) if feat == "hog_baseline" else (lambda A: np.array([whiten(a) for a in A]))
        fields_, scores = _train_eval(cfg, ws, feat, f"detect-{feat}", cfg.rms_levels[-1],
                                      prep(Xtr), ytr, prep(Xte), yte, groups=gtr)
        thr, prec, rec, _ = precision_recall(scores, yte)
        if ws.root is not None:
            with open(ws.root / f"pr_{feat}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\r\n")
                w.writerow(("threshold", "precision", "recall"))
                w.writerows((_format(a), _format(b), _format(c)) for a, b, c in zip(thr, prec, rec))
        return ResultRow(cfg.experiment, feat, len(ytr), cfg.rms_levels[-1],
                         eer=equal_error_rate(scores, yte), **fields_)

    return _run_cells(cfg, list(cfg.feature), cell)


RUNNERS = {
    "noise_vs_structured": run_noise_vs_structured,
    "alignment_sweep": run_alignment_sweep,
    "detect_desk": run_detect_desk,
}


def run(cfg: ExperimentConfig) -> list[ResultRow]:
    return RUNNERS[cfg.experiment](cfg)


# -- assertions -----------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _by(rows, **match):
    return [r for r in rows if all(getattr(r, k) == v for k, v in match.items())]


def check_noise(rows) -> list[Check]:
    acc = {r.feature: r.test_accuracy for r in rows}
    q, p, s = acc.get("quad", np.nan), acc.get("pixels", np.nan), acc.get("quad_shuffled", np.nan)
    return [
        Check("quad accuracy >= 0.90", q >= 0.90, f"{q:.4f}"),
        Check("pixel accuracy <= 0.60", p <= 0.60, f"{p:.4f}"),
        Check("shuffled-label quad accuracy in [0.45, 0.55]", 0.45 <= s <= 0.55, f"{s:.4f}"),
    ]


def check_sweep(rows, slack: float = 0.02, saturation: float = 0.05) -> list[Check]:
    out = []
    sizes = sorted({r.train_size for r in rows})
    for rms in sorted({r.rms_level for r in rows}):
        quad = {r.train_size: r.test_accuracy for r in _by(rows, feature="quad", rms_level=rms)}
        if len(quad) >= 2:
            steps = [(a, b) for a, b in zip(sizes, sizes[1:]) if a in quad and b in quad]
            bad = [(a, b) for a, b in steps if quad[b] < quad[a] - slack]
            out.append(Check(f"quad non-decreasing with data at rms {rms:g}", not bad,
                             " ".join(f"{s}:{quad[s]:.3f}" for s in sorted(quad))))
        for feat in sorted({r.feature for r in rows if r.feature.startswith("hog")}):
            hog = {r.train_size: r.test_accuracy for r in _by(rows, feature=feat, rms_level=rms)}
            if len(hog) >= 2:
                a, b = sorted(hog)[-2:]
                delta = abs(hog[b] - hog[a])
                out.append(Check(f"{feat} saturated at rms {rms:g}", delta <= saturation,
                                 f"|{hog[b]:.3f} - {hog[a]:.3f}| = {delta:.3f}"))
    return out


def check_detect(rows) -> list[Check]:
    eer = {r.feature: r.eer for r in rows}
    h, q, p = eer.get("hog_baseline", np.nan), eer.get("quad", np.nan), eer.get("pixels", np.nan)
    return [
        Check("quad EER < pixel EER", q < p, f"quad {q:.4f}, pixels {p:.4f}"),
        Check("hog_baseline EER <= quad EER <= pixel EER", h <= q <= p,
              f"hog {h:.4f}, quad {q:.4f}, pixels {p:.4f}"),
    ]


CHECKS = {
    "noise_vs_structured": check_noise,
    "alignment_sweep": check_sweep,
    "detect_desk": check_detect,
}
