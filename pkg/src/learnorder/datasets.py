"""Labeled datasets: synthetic generators, IDX/CSV ingestion and simple transforms.

Feature CSV layout: header ``label,f0,f1,...``, one example per row.
IDX layout (big-endian): images ``0x00000803, count, rows, cols, bytes``;
labels ``0x00000801, count, bytes``.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.preprocessing import StandardScaler

from ._utils import atomic_write, check_positive_int, substream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix ``(M, d)`` with class labels in ``[0, num_classes)``.

    Arrays are stored read-only; transforms return new datasets.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    provenance: str = ""

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {X.shape[0]} examples")
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.mod(y, 1) == 0):
                raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        check_positive_int(self.num_classes, "num_classes", minimum=2)
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", int(self.num_classes))

    @property
    def n_examples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n_examples

    def subset(self, indices, provenance=None) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, features=self.features[indices], labels=self.labels[indices],
                       provenance=provenance or f"{self.provenance}[subset n={indices.size}]")

    def with_labels(self, labels, provenance=None) -> "LabeledDataset":
        return replace(self, labels=labels, provenance=provenance or self.provenance)


# --------------------------------------------------------------------------- generators

def gen_gaussian(dim, mean_shift, n_train_per_class, n_test_per_class, seed):
    """Two overlapping isotropic Gaussian classes.

    Class 0 is drawn from ``N(0, I)`` and class 1 from ``N(mean_shift * 1, I)``.
    Examples are returned in a seeded random order.

    Returns
    -------
    (train, test) : tuple of LabeledDataset
    """
    dim = check_positive_int(dim, "dim")
    n_tr = check_positive_int(n_train_per_class, "n_train_per_class")
    n_te = check_positive_int(n_test_per_class, "n_test_per_class")
    if not math.isfinite(mean_shift):
        raise ValueError(f"mean_shift must be finite, got {mean_shift!r}")
    out = []
    for split_id, (split, n) in enumerate((("train", n_tr), ("test", n_te))):
        rng = substream(seed, split_id)
        X = rng.standard_normal((2 * n, dim))
        X[n:] += mean_shift
        y = np.repeat([0, 1], n)
        perm = rng.permutation(2 * n)
        out.append(LabeledDataset(X[perm], y[perm], 2, split,
                                  f"gaussian(dim={dim},shift={mean_shift},seed={seed})"))
    return tuple(out)


@dataclass(frozen=True)
class GaborConfig:
    """Parameters of the 12-class Gabor patch generator.

    Classes are indexed ``channel * len(base_orientations) + orientation_index``.
    """

    image_size: int = 32
    n_train_per_class: int = 100
    n_test_per_class: int = 20
    base_orientations: tuple = (45.0, 90.0, 135.0, 180.0)
    orientation_jitter: float = 30.0
    sigma_range: tuple = (2.0, 6.0)
    wavelength_factor: float = 2.0
    center_range: tuple = (8.0, 24.0)
    phase: float = 0.0

    def __post_init__(self):
        check_positive_int(self.image_size, "image_size", minimum=4)
        check_positive_int(self.n_train_per_class, "n_train_per_class")
        check_positive_int(self.n_test_per_class, "n_test_per_class")
        if len(self.base_orientations) < 1:
            raise ValueError("need at least one base orientation")
        if not (self.orientation_jitter >= 0):
            raise ValueError("orientation_jitter must be >= 0")
        lo, hi = self.sigma_range
        if not (0 < lo <= hi):
            raise ValueError(f"invalid sigma_range {self.sigma_range}")
        lo, hi = self.center_range
        if not (0 <= lo <= hi <= self.image_size - 1):
            raise ValueError(f"invalid center_range {self.center_range} for image_size {self.image_size}")
        if not (self.wavelength_factor > 0):
            raise ValueError("wavelength_factor must be > 0")
        object.__setattr__(self, "base_orientations", tuple(float(o) for o in self.base_orientations))
        object.__setattr__(self, "sigma_range", tuple(float(s) for s in self.sigma_range))
        object.__setattr__(self, "center_range", tuple(float(s) for s in self.center_range))

    @property
    def num_classes(self) -> int:
        return 3 * len(self.base_orientations)


def gabor_patch(size, center, sigma, wavelength, theta_deg, phase=0.0):
    """One Gaussian-windowed cosine grating on a ``size x size`` grid."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = np.deg2rad(theta_deg)
    dx, dy = xx - center[0], yy - center[1]
    along = dx * np.cos(theta) + dy * np.sin(theta)
    envelope = np.exp(-(dx**2 + dy**2) / (2.0 * sigma**2))
    return envelope * np.cos(2.0 * np.pi * along / wavelength + phase)


def gen_gabor(config: GaborConfig | None = None, seed=0):
    """RGB Gabor patches, one class per (channel, base orientation) pair.

    Each image draws its orientation uniformly within ``base +- jitter``, a
    window width ``sigma`` uniformly from ``sigma_range`` (wavelength
    ``wavelength_factor * sigma``) and a center uniformly from
    ``center_range`` in both axes. The grating occupies the class's channel
    only; images are flattened in (row, col, channel) order.
    """
    config = config or GaborConfig()
    S = config.image_size
    n_orient = len(config.base_orientations)
    K = config.num_classes
    out = []
    for split_id, (split, n) in enumerate((("train", config.n_train_per_class),
                                           ("test", config.n_test_per_class))):
        rng = substream(seed, split_id)
        labels = np.repeat(np.arange(K), n)
        X = np.zeros((K * n, S, S, 3))
        for idx, k in enumerate(labels):
            channel, o = divmod(int(k), n_orient)
            theta = config.base_orientations[o] + rng.uniform(-config.orientation_jitter,
                                                              config.orientation_jitter)
            sigma = rng.uniform(*config.sigma_range)
            center = rng.uniform(*config.center_range, size=2)
            X[idx, :, :, channel] = gabor_patch(S, center, sigma, config.wavelength_factor * sigma,
                                                theta, config.phase)
        np.clip(X, -1.0, 1.0, out=X)
        perm = rng.permutation(K * n)
        out.append(LabeledDataset(X.reshape(K * n, -1)[perm], labels[perm], K, split,
                                  f"gabor(seed={seed})"))
    return tuple(out)


def gen_noise(count, dim, seed, num_classes=10):
    """I.i.d. standard normal images with placeholder labels 0 (treated as unlabeled)."""
    count = check_positive_int(count, "count")
    dim = check_positive_int(dim, "dim")
    rng = substream(seed, 0)
    X = rng.standard_normal((count, dim))
    return LabeledDataset(X, np.zeros(count, dtype=np.int64), num_classes, "test",
                          f"noise(count={count},dim={dim},seed={seed})")


def shuffle_labels(dataset: LabeledDataset, seed) -> LabeledDataset:
    """Replace every label with an independent uniform draw over the classes."""
    rng = substream(seed, 0)
    y = rng.integers(0, dataset.num_classes, size=dataset.n_examples)
    return dataset.with_labels(y, f"{dataset.provenance}+shuffled(seed={seed})")


def partition(dataset: LabeledDataset, parts, seed) -> list[LabeledDataset]:
    """Randomly split into ``parts`` disjoint pieces.

    Each piece keeps the original example order, so ``parts=1`` returns the
    dataset unchanged. When ``parts`` does not divide the size, the first
    pieces get one extra example each.
    """
    parts = check_positive_int(parts, "parts")
    if parts > dataset.n_examples:
        raise ValueError(f"cannot split {dataset.n_examples} examples into {parts} parts")
    perm = substream(seed, 0).permutation(dataset.n_examples)
    return [dataset.subset(np.sort(idx), f"{dataset.provenance}[part {p}/{parts} seed={seed}]")
            for p, idx in enumerate(np.array_split(perm, parts))]


# --------------------------------------------------------------------------- IDX

def _open_maybe_gz(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 images, shape ``(count, rows, cols)``."""
    with _open_maybe_gz(path) as fh:
        data = fh.read()
    if len(data) < 16:
        raise DatasetFormatError(f"{path}: truncated IDX image header")
    magic, count, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise DatasetFormatError(f"{path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
    body = data[16:]
    if len(body) != count * rows * cols:
        raise DatasetFormatError(f"{path}: expected {count * rows * cols} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with _open_maybe_gz(path) as fh:
        data = fh.read()
    if len(data) < 8:
        raise DatasetFormatError(f"{path}: truncated IDX label header")
    magic, count = struct.unpack(">II", data[:8])
    if magic != IDX_LABEL_MAGIC:
        raise DatasetFormatError(f"{path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
    body = data[8:]
    if len(body) != count:
        raise DatasetFormatError(f"{path}: expected {count} label bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8)


def load_idx(images_path, labels_path, num_classes=10, split="train") -> LabeledDataset:
    """Load an IDX image/label pair, scaling pixels to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(
            f"image/label count mismatch: {images.shape[0]} images, {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(X, labels.astype(np.int64), num_classes, split,
                          f"idx({Path(images_path).name})")


def write_idx(images, labels, images_path, labels_path):
    """Write uint8 images ``(count, rows, cols)`` and labels to an IDX pair."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 3:
        raise ValueError("images must have shape (count, rows, cols)")
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image/label count mismatch")
    for arr, what in ((images, "pixel"), (labels, "label")):
        if arr.size and (arr.min() < 0 or arr.max() > 255 or np.any(np.mod(arr, 1))):
            raise ValueError(f"{what} values must be integers in [0, 255]")
    count, rows, cols = images.shape
    with atomic_write(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, count, rows, cols))
        fh.write(images.astype(np.uint8).tobytes())
    with atomic_write(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, count))
        fh.write(labels.astype(np.uint8).tobytes())


# --------------------------------------------------------------------------- feature CSV

def load_features_csv(path, num_classes, split="train") -> LabeledDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise DatasetFormatError(f"{path}: header must start with 'label'")
        width = len(header)
        if width < 2:
            raise DatasetFormatError(f"{path}: no feature columns")
        labels, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise DatasetFormatError(f"{path}:{lineno}: ragged row ({len(rec)} fields, expected {width})")
            try:
                lab = int(rec[0])
                vals = [float(v) for v in rec[1:]]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: unparseable field") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DatasetFormatError(f"{path}:{lineno}: non-finite feature value")
            if not (0 <= lab < num_classes):
                raise DatasetFormatError(f"{path}:{lineno}: label {lab} outside [0, {num_classes})")
            labels.append(lab)
            rows.append(vals)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), width - 1)
    return LabeledDataset(X, np.array(labels, dtype=np.int64), num_classes, split,
                          f"csv({Path(path).name})")


def export_features_csv(dataset: LabeledDataset, path):
    with atomic_write(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{i}" for i in range(dataset.n_features)])
        for y, x in zip(dataset.labels, dataset.features):
            w.writerow([int(y)] + [repr(float(v)) for v in x])


# --------------------------------------------------------------------------- transforms

def normalize_per_feature(train: LabeledDataset, *others: LabeledDataset):
    """Standardize every feature with statistics of ``train`` only.

    Constant features map to 0. Returns the transformed ``(train, *others)``.
    """
    if train.n_examples == 0:
        raise ValueError("train split is empty")
    scaler = StandardScaler().fit(train.features)
    return tuple(replace(ds, features=scaler.transform(ds.features),
                         provenance=f"{ds.provenance}+normalized")
                 for ds in (train, *others))
