"""Independence baseline: random classification vectors with matched accuracy."""

from __future__ import annotations

import math

import numpy as np

from ._utils import substream
from .predlog import Manifest, PredictionLog, accuracy_table, create_log


def null_log(accuracy_table, labels, num_classes, seed, *, epoch_schedule=None,
             dataset_id="null", split="test", learner_tag="null") -> PredictionLog:
    """Log of mutually independent random classifiers with given accuracies.

    For every ``(extent, model)`` cell with accuracy ``a``, exactly
    ``round(a * M)`` examples chosen uniformly without replacement get their
    true label; every other example gets a label drawn uniformly from the
    ``K - 1`` wrong ones. Each cell draws from its own seed substream.

    Parameters
    ----------
    accuracy_table : array-like, shape (extents, models)
    labels : array-like of int, shape (M,)
    num_classes : int
    seed : int
    epoch_schedule : sequence of int, optional
        Defaults to ``0, 1, ..., extents - 1``.
    """
    table = np.asarray(accuracy_table, dtype=np.float64)
    if table.ndim != 2:
        raise ValueError(f"accuracy_table must be 2-D (extents, models), got shape {table.shape}")
    if not np.all(np.isfinite(table)) or table.min() < 0 or table.max() > 1:
        raise ValueError("accuracies must be finite and lie in [0, 1]")
    labels = np.asarray(labels, dtype=np.int64)
    M = labels.shape[0]
    K = int(num_classes)
    E, N = table.shape
    if epoch_schedule is None:
        epoch_schedule = tuple(range(E))
    manifest = Manifest(dataset_id=dataset_id, split=split, num_classes=K, num_examples=M,
                        num_models=N, epoch_schedule=tuple(epoch_schedule),
                        learner_tag=learner_tag, seed=int(seed))
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    log = create_log(manifest)
    for e in range(E):
        for i in range(N):
            rng = substream(seed, e, i)
            n_correct = math.floor(table[e, i] * M + 0.5)
            pred = (labels + rng.integers(1, K, size=M)) % K
            hit = rng.choice(M, size=n_correct, replace=False)
            pred[hit] = labels[hit]
            log.record_row(e, i, pred)
    return log


def null_from(log: PredictionLog, labels, seed) -> PredictionLog:
    """Null log matching the per-(extent, model) accuracy of ``log``."""
    m = log.manifest
    return null_log(accuracy_table(log, labels), labels, m.num_classes, seed,
                    epoch_schedule=m.epoch_schedule, dataset_id=m.dataset_id,
                    split=m.split, learner_tag=f"{m.learner_tag}+null")
