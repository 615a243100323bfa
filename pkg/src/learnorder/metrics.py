"""Per-example agreement statistics over prediction logs.

All functions read filled extent slabs from a :class:`~learnorder.predlog.PredictionLog`
and never mutate it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._utils import atomic_write
from .predlog import PredictionLog, _check_labels

SCORE_KINDS = ("tp_agreement", "agreement", "accessibility")

# Notched-box half width factor for the interval around a median.
MEDIAN_CI_FACTOR = 1.57


class DegenerateDistributionError(ValueError):
    """Moments are undefined because the sample has zero variance."""


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    kind: str
    epoch_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"kind must be one of {SCORE_KINDS}")

    def __len__(self):
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class HistogramMatrix:
    """Counts per (extent, bin); ``bin_edges`` has ``n_bins + 1`` entries on [0, 1]."""

    counts: np.ndarray
    bin_edges: np.ndarray
    extents: tuple
    kind: str = "tp_agreement"


@dataclass(frozen=True)
class LearnedEpochBox:
    bin_index: int
    median: float
    ci_low: float
    ci_high: float
    count: int


# --------------------------------------------------------------------------- counts

def _correct_counts(log, labels, epoch_index) -> np.ndarray:
    slab = log.slab(epoch_index)
    return np.count_nonzero(slab == labels[None, :], axis=0)


def _plurality(slab: np.ndarray):
    """Largest vote count and its label per column; ties go to the lowest label."""
    s = np.sort(slab, axis=0)
    run = np.ones(s.shape[1], dtype=np.int64)
    best = run.copy()
    best_label = s[0].astype(np.int64)
    for r in range(1, s.shape[0]):
        same = s[r] == s[r - 1]
        run = np.where(same, run + 1, 1)
        better = run > best
        best = np.where(better, run, best)
        best_label = np.where(better, s[r], best_label)
    return best, best_label


def tp_agreement(log: PredictionLog, labels, epoch_index) -> ScoreVector:
    """Fraction of models classifying each example correctly at one extent."""
    labels = _check_labels(log, labels)
    counts = _correct_counts(log, labels, epoch_index)
    return ScoreVector(counts / log.manifest.num_models, "tp_agreement", int(epoch_index))


def agreement(log: PredictionLog, epoch_index) -> ScoreVector:
    """Largest fraction of models predicting the same label, correct or not."""
    best, _ = _plurality(log.slab(epoch_index))
    return ScoreVector(best / log.manifest.num_models, "agreement", int(epoch_index))


def tp_agreement_table(log: PredictionLog, labels) -> np.ndarray:
    """TP-agreement for every extent, shape ``(extents, examples)``."""
    labels = _check_labels(log, labels)
    N = log.manifest.num_models
    return np.stack([_correct_counts(log, labels, e) / N for e in range(log.manifest.num_extents)])


def accessibility(log: PredictionLog, labels) -> ScoreVector:
    """Mean TP-agreement over every logged extent."""
    labels = _check_labels(log, labels)
    E = log.manifest.num_extents
    total = np.zeros(log.manifest.num_examples)
    for e in range(E):
        total += _correct_counts(log, labels, e) / log.manifest.num_models
    return ScoreVector(total / E, "accessibility")


def bimodality(values) -> float:
    """Pearson's bi-modality score ``kurtosis - skewness**2 - 1``.

    Uses population moments and raw (non-excess) kurtosis, so a normal
    distribution scores about 2 and any two-point distribution scores 0.
    Lower means more bi-modal.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise DegenerateDistributionError("need at least two values")
    if np.ptp(x) == 0:
        raise DegenerateDistributionError("zero variance")
    c = x - x.mean()
    m2 = np.mean(c**2)
    m3 = np.mean(c**3)
    m4 = np.mean(c**4)
    return float(m4 / m2**2 - m3**2 / m2**3 - 1.0)


def bimodality_or_nan(values) -> float:
    try:
        return bimodality(values)
    except DegenerateDistributionError:
        return float("nan")


# --------------------------------------------------------------------------- learning time

def _correctness_over_extents(log, labels, model_index) -> np.ndarray:
    E = log.manifest.num_extents
    return np.stack([log.row(e, model_index) == labels for e in range(E)])


def learned_epoch(log: PredictionLog, labels, model_index) -> np.ndarray:
    """Index of the first extent from which each example stays correct.

    Examples wrong at the final extent get the sentinel ``num_extents``.
    """
    labels = _check_labels(log, labels)
    C = _correctness_over_extents(log, labels, model_index)
    E = C.shape[0]
    wrong = ~C
    # last wrong index + 1; -1 + 1 = 0 when never wrong
    last_wrong = np.where(wrong.any(axis=0), E - 1 - np.argmax(wrong[::-1], axis=0), -1)
    return last_wrong + 1


def learned_extent_table(log: PredictionLog, labels) -> np.ndarray:
    """Learned extent value per ``(model, example)``; ``inf`` if never stable."""
    labels = _check_labels(log, labels)
    sched = np.asarray(log.manifest.epoch_schedule + (np.inf,), dtype=np.float64)
    return np.stack([sched[learned_epoch(log, labels, i)] for i in range(log.manifest.num_models)])


def median_interval(values):
    """Median with the notched-box interval ``median +- 1.57 * IQR / sqrt(n)``."""
    v = np.asarray(values, dtype=np.float64)
    # interpolating towards inf yields nan; use a finite stand-in and map back
    big = 1e300
    q1, med, q3 = (float(q) if q < big / 10 else math.inf
                   for q in np.percentile(np.where(np.isinf(v), big, v), [25, 50, 75]))
    if math.isinf(q3):
        half = 0.0 if math.isinf(q1) else math.inf
    else:
        half = MEDIAN_CI_FACTOR * (q3 - q1) / math.sqrt(v.size)
    return med, med - half, med + half


def learned_epoch_boxes(log: PredictionLog, labels, bin_fraction=0.05) -> list[LearnedEpochBox]:
    """Median learned extent for groups of examples ordered by accessibility.

    Examples are sorted by accessibility (descending, stable) and cut into
    ``ceil(1 / bin_fraction)`` consecutive groups of ``bin_fraction * M``.
    Each example contributes the median over models of its learned extent;
    never-learned examples count as ``inf``.
    """
    if not (0 < bin_fraction <= 1):
        raise ValueError(f"bin_fraction must lie in (0, 1], got {bin_fraction}")
    labels = _check_labels(log, labels)
    M = log.manifest.num_examples
    acc = accessibility(log, labels).values
    order = np.argsort(-acc, kind="stable")
    per_example = np.median(learned_extent_table(log, labels), axis=0)
    n_bins = math.ceil(1.0 / bin_fraction - 1e-9)
    size = bin_fraction * M
    boxes = []
    for b in range(n_bins):
        lo = min(M, math.floor(b * size + 1e-9))
        hi = M if b == n_bins - 1 else min(M, math.floor((b + 1) * size + 1e-9))
        members = per_example[order[lo:hi]]
        if members.size == 0:
            boxes.append(LearnedEpochBox(b, math.nan, math.nan, math.nan, 0))
            continue
        boxes.append(LearnedEpochBox(b, *median_interval(members), int(members.size)))
    return boxes


# --------------------------------------------------------------------------- distributions

def _bin_index(counts, num_models, n_bins):
    # integer arithmetic keeps grid values exactly on their bins
    return np.minimum((counts.astype(np.int64) * n_bins) // num_models, n_bins - 1)


def _condensed(log, n_bins, count_fn, kind):
    if n_bins < 2:
        raise ValueError(f"bins must be >= 2, got {n_bins}")
    E, N = log.manifest.num_extents, log.manifest.num_models
    counts = np.zeros((E, n_bins), dtype=np.int64)
    for e in range(E):
        idx = _bin_index(count_fn(e), N, n_bins)
        counts[e] = np.bincount(idx, minlength=n_bins)
    return HistogramMatrix(counts, np.linspace(0.0, 1.0, n_bins + 1), log.manifest.epoch_schedule, kind)


def condensed(log: PredictionLog, labels, bins=50) -> HistogramMatrix:
    """Histogram of TP-agreement per extent over equal-width bins on [0, 1]."""
    labels = _check_labels(log, labels)
    return _condensed(log, bins, lambda e: _correct_counts(log, labels, e), "tp_agreement")


def condensed_agreement(log: PredictionLog, bins=50) -> HistogramMatrix:
    """Label-free variant of :func:`condensed` using the agreement score."""
    return _condensed(log, bins, lambda e: _plurality(log.slab(e))[0], "agreement")


def modal_label(log: PredictionLog, epoch_index) -> np.ndarray:
    """Plurality predicted label per example; ties break to the lowest class id."""
    return _plurality(log.slab(epoch_index))[1]


def majority_vote(log: PredictionLog, epoch_index) -> np.ndarray:
    """Majority-vote ensemble prediction (same rule as :func:`modal_label`)."""
    return modal_label(log, epoch_index)


def trajectory(log: PredictionLog, labels, example_index) -> np.ndarray:
    """TP-agreement of one example across the extent schedule."""
    labels = _check_labels(log, labels)
    M = log.manifest.num_examples
    if not (0 <= example_index < M):
        raise IndexError(f"example_index {example_index} out of range [0, {M})")
    N = log.manifest.num_models
    return np.array([np.count_nonzero(log.slab(e)[:, example_index] == labels[example_index]) / N
                     for e in range(log.manifest.num_extents)])


# --------------------------------------------------------------------------- CSV export

def write_scores_csv(scores, path):
    values = np.asarray(scores)
    with atomic_write(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["example_index", "value"])
        w.writerows((j, repr(float(v))) for j, v in enumerate(values))


def read_scores_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["example_index", "value"]:
            raise ValueError(f"{path}: header must be example_index,value")
        rows = sorted((int(i), float(v)) for i, v in reader)
    idx = [i for i, _ in rows]
    if idx != list(range(len(idx))):
        raise ValueError(f"{path}: example_index must cover 0..M-1 exactly once")
    return np.array([v for _, v in rows])


def write_histogram_csv(hist: HistogramMatrix, path):
    with atomic_write(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["extent", "bin_low", "bin_high", "count"])
        for extent, row in zip(hist.extents, hist.counts):
            for b, c in enumerate(row):
                w.writerow([extent, repr(float(hist.bin_edges[b])), repr(float(hist.bin_edges[b + 1])), int(c)])


def write_boxes_csv(boxes, path):
    with atomic_write(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_index", "median", "ci_low", "ci_high"])
        for b in boxes:
            w.writerow([b.bin_index, b.median, b.ci_low, b.ci_high])
