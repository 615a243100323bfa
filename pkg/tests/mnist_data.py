"""Locate MNIST IDX files for the experiment tests.

If ``LEARNORDER_MNIST_DIR`` points at a directory with the four standard
MNIST IDX files (optionally gzipped), those are used. Otherwise the
5000-image MNIST sample bundled with ``mlxtend`` is written out once as an
IDX pair (4000 train / 1000 test, seeded split) under a cache directory.
"""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from learnorder.datasets import load_idx, write_idx

STANDARD_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
SAMPLE_SPLIT_SEED = 20200712
SAMPLE_TRAIN = 4000


@dataclass(frozen=True)
class MnistFiles:
    train_images: Path
    train_labels: Path
    test_images: Path
    test_labels: Path
    source: str

    def load(self, train_limit=None, test_limit=None):
        train = load_idx(self.train_images, self.train_labels, 10, "train")
        test = load_idx(self.test_images, self.test_labels, 10, "test")
        if train_limit is not None and train_limit < train.n_examples:
            train = train.subset(np.arange(train_limit))
        if test_limit is not None and test_limit < test.n_examples:
            test = test.subset(np.arange(test_limit))
        return train, test


def _find_standard(root: Path):
    found = {}
    for key, name in STANDARD_NAMES.items():
        for cand in (root / name, root / f"{name}.gz"):
            if cand.exists():
                found[key] = cand
                break
        else:
            return None
    return MnistFiles(**found, source=f"MNIST IDX files in {root}")


def _sample_csv_path() -> Path:
    import mlxtend.data

    return Path(mlxtend.data.__file__).parent / "data" / "mnist_5k.csv.gz"


def _build_sample(cache: Path) -> MnistFiles:
    files = MnistFiles(cache / "train-images-idx3-ubyte", cache / "train-labels-idx1-ubyte",
                       cache / "t10k-images-idx3-ubyte", cache / "t10k-labels-idx1-ubyte",
                       source="mlxtend 5k MNIST sample")
    if all(p.exists() for p in (files.train_images, files.train_labels, files.test_images, files.test_labels)):
        return files
    with gzip.open(_sample_csv_path(), "rt") as fh:
        raw = np.loadtxt(fh, delimiter=",")
    pixels = raw[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = raw[:, -1].astype(np.uint8)
    perm = np.random.default_rng(SAMPLE_SPLIT_SEED).permutation(len(labels))
    tr, te = perm[:SAMPLE_TRAIN], perm[SAMPLE_TRAIN:]
    write_idx(pixels[tr], labels[tr], files.train_images, files.train_labels)
    write_idx(pixels[te], labels[te], files.test_images, files.test_labels)
    return files


def mnist_files(cache_dir=None) -> MnistFiles:
    env = os.environ.get("LEARNORDER_MNIST_DIR")
    if env:
        files = _find_standard(Path(env))
        if files is None:
            raise FileNotFoundError(f"LEARNORDER_MNIST_DIR={env} lacks the standard MNIST IDX files")
        return files
    cache = Path(cache_dir or os.environ.get("LEARNORDER_CACHE", Path.home() / ".cache" / "learnorder" / "mnist5k"))
    return _build_sample(cache)
