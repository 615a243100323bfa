"""Prediction logs: the extent x model x example tensor of predicted class ids.

Every statistic in the package reads predictions through a
:class:`PredictionLog`. A log is allocated empty, filled one
``(extent, model)`` row at a time, and refuses to hand out any extent slab
that still has unfilled rows.

Binary layout (``.plog``)::

    b"PLOG" | uint32 LE version (=1) | uint64 LE manifest length |
    UTF-8 JSON manifest | uint16 LE predictions, (extent, model, example) row-major

CSV layout: header ``epoch_index,model_index,example_index,predicted_label``,
one row per cell, manifest supplied separately as JSON.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._utils import atomic_write, check_positive_int, check_schedule

MAGIC = b"PLOG"
FORMAT_VERSION = 1
MAX_CLASSES = 65535
DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes
CSV_HEADER = ("epoch_index", "model_index", "example_index", "predicted_label")
SPLITS = ("train", "test", "unlabeled")

_DTYPE = np.dtype("<u2")


class LogFormatError(ValueError):
    """A log file or CSV does not follow the expected layout."""


class UnfilledEpochError(RuntimeError):
    """A metric asked for an extent slab that is not fully recorded."""


@dataclass(frozen=True)
class Manifest:
    """Describes what a prediction log contains.

    ``epoch_schedule`` lists the training extents the log was recorded at
    (epochs for neural learners, weak-learner counts for boosting).
    """

    dataset_id: str
    split: str
    num_classes: int
    num_examples: int
    num_models: int
    epoch_schedule: tuple = field(default=(1,))
    learner_tag: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        check_positive_int(self.num_classes, "num_classes", minimum=2)
        check_positive_int(self.num_examples, "num_examples")
        check_positive_int(self.num_models, "num_models")
        object.__setattr__(self, "epoch_schedule", check_schedule(self.epoch_schedule))
        object.__setattr__(self, "num_classes", int(self.num_classes))
        object.__setattr__(self, "num_examples", int(self.num_examples))
        object.__setattr__(self, "num_models", int(self.num_models))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def num_extents(self) -> int:
        return len(self.epoch_schedule)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.num_extents, self.num_models, self.num_examples)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epoch_schedule"] = list(self.epoch_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown manifest fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "Manifest":
        d = self.to_dict()
        d.update(changes)
        return Manifest.from_dict(d)


@dataclass(frozen=True)
class CorrectnessMatrix:
    """N x M boolean matrix for one extent: ``bits[i, j]`` is model i correct on example j."""

    bits: np.ndarray
    epoch_index: int


class PredictionLog:
    """Dense uint16 tensor of predicted labels with per-row fill tracking.

    Use :func:`create_log` to allocate one.
    """

    def __init__(self, manifest: Manifest, predictions: np.ndarray, filled: np.ndarray):
        self.manifest = manifest
        self._pred = predictions
        self._filled = filled

    def __repr__(self):
        m = self.manifest
        return (f"PredictionLog(dataset_id={m.dataset_id!r}, split={m.split!r}, "
                f"shape={m.shape}, filled={int(self._filled.sum())}/{self._filled.size})")

    @property
    def shape(self):
        return self._pred.shape

    @property
    def is_filled(self) -> bool:
        return bool(self._filled.all())

    def filled_rows(self) -> np.ndarray:
        """Copy of the ``(extent, model)`` fill mask."""
        return self._filled.copy()

    def record_row(self, epoch_index, model_index, predicted_labels):
        """Store one model's predictions at one extent, replacing any earlier row."""
        m = self.manifest
        if not (0 <= epoch_index < m.num_extents):
            raise IndexError(f"epoch_index {epoch_index} out of range [0, {m.num_extents})")
        if not (0 <= model_index < m.num_models):
            raise IndexError(f"model_index {model_index} out of range [0, {m.num_models})")
        labels = np.asarray(predicted_labels)
        if labels.shape != (m.num_examples,):
            raise ValueError(f"expected {m.num_examples} predicted labels, got shape {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise ValueError("predicted labels must be integer class ids")
        if labels.size and (labels.min() < 0 or labels.max() >= m.num_classes):
            raise ValueError(f"predicted labels must lie in [0, {m.num_classes})")
        self._pred[epoch_index, model_index] = labels.astype(_DTYPE)
        self._filled[epoch_index, model_index] = True

    def record_extent(self, epoch_index, predictions):
        """Store a full N x M slab for one extent."""
        predictions = np.asarray(predictions)
        for i in range(self.manifest.num_models):
            self.record_row(epoch_index, i, predictions[i])

    def row(self, epoch_index, model_index) -> np.ndarray:
        if not self._filled[epoch_index, model_index]:
            raise UnfilledEpochError(
                f"unfilled epoch: extent index {epoch_index}, model {model_index} not recorded")
        out = self._pred[epoch_index, model_index].view()
        out.flags.writeable = False
        return out

    def slab(self, epoch_index) -> np.ndarray:
        """Read-only N x M predictions at one extent; unfilled rows are an error."""
        m = self.manifest
        if not (-m.num_extents <= epoch_index < m.num_extents):
            raise IndexError(f"epoch_index {epoch_index} out of range [0, {m.num_extents})")
        missing = np.flatnonzero(~self._filled[epoch_index])
        if missing.size:
            raise UnfilledEpochError(
                f"unfilled epoch: extent index {epoch_index} missing models {missing.tolist()[:10]}")
        out = self._pred[epoch_index].view()
        out.flags.writeable = False
        return out

    def tensor(self) -> np.ndarray:
        """Read-only full tensor; every row must be filled."""
        for e in range(self.manifest.num_extents):
            self.slab(e)
        out = self._pred.view()
        out.flags.writeable = False
        return out

    def require_filled(self):
        self.tensor()
        return self


def create_log(manifest: Manifest, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> PredictionLog:
    """Allocate an empty log for ``manifest``.

    Raises
    ------
    ValueError
        If ``num_classes`` exceeds the uint16 cap or the tensor would exceed
        ``memory_budget`` bytes.
    """
    if manifest.num_classes > MAX_CLASSES:
        raise ValueError(f"num_classes {manifest.num_classes} exceeds the format cap of {MAX_CLASSES}")
    nbytes = int(np.prod(manifest.shape, dtype=np.int64)) * _DTYPE.itemsize
    if nbytes > memory_budget:
        raise ValueError(f"log needs {nbytes} bytes, over the memory budget of {memory_budget}")
    pred = np.zeros(manifest.shape, dtype=_DTYPE)
    filled = np.zeros(manifest.shape[:2], dtype=bool)
    return PredictionLog(manifest, pred, filled)


def log_from_tensor(manifest: Manifest, predictions) -> PredictionLog:
    """Build a filled log from a complete ``(extents, models, examples)`` array."""
    predictions = np.asarray(predictions)
    if predictions.shape != manifest.shape:
        raise ValueError(f"tensor shape {predictions.shape} does not match manifest {manifest.shape}")
    log = create_log(manifest)
    for e in range(manifest.num_extents):
        log.record_extent(e, predictions[e])
    return log


def subset_models(log: PredictionLog, model_indices, learner_tag=None) -> PredictionLog:
    """Log restricted to a sub-collection of models (e.g. disjoint halves)."""
    idx = np.asarray(model_indices, dtype=np.int64)
    if idx.size == 0 or len(set(idx.tolist())) != idx.size:
        raise ValueError("model_indices must be non-empty and distinct")
    tensor = log.tensor()[:, idx, :]
    manifest = log.manifest.replace(num_models=int(idx.size),
                                    learner_tag=learner_tag or log.manifest.learner_tag)
    return log_from_tensor(manifest, tensor)


def _check_labels(log: PredictionLog, labels) -> np.ndarray:
    labels = np.asarray(labels)
    m = log.manifest
    if labels.shape != (m.num_examples,):
        raise ValueError(f"labels length {labels.shape} does not match num_examples {m.num_examples}")
    if labels.size and (labels.min() < 0 or labels.max() >= m.num_classes):
        raise ValueError(f"labels must lie in [0, {m.num_classes})")
    return labels.astype(np.int64)


def correctness(log: PredictionLog, labels, epoch_index) -> CorrectnessMatrix:
    """Classification vectors of every model at one extent."""
    labels = _check_labels(log, labels)
    bits = log.slab(epoch_index) == labels[None, :]
    return CorrectnessMatrix(bits=bits, epoch_index=int(epoch_index))


def accuracy(log: PredictionLog, labels, epoch_index, model_index) -> float:
    """Fraction of examples model ``model_index`` classifies correctly at one extent."""
    labels = _check_labels(log, labels)
    row = log.row(epoch_index, model_index)
    return np.count_nonzero(row == labels) / log.manifest.num_examples


def accuracy_table(log: PredictionLog, labels) -> np.ndarray:
    """Per ``(extent, model)`` accuracy, shape ``(extents, models)``."""
    labels = _check_labels(log, labels)
    tensor = log.tensor()
    return np.count_nonzero(tensor == labels[None, None, :], axis=2) / log.manifest.num_examples


# --------------------------------------------------------------------------- persistence

def save(log: PredictionLog, path):
    tensor = log.tensor()
    manifest = json.dumps(log.manifest.to_dict(), sort_keys=True).encode("utf-8")
    with atomic_write(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        fh.write(np.ascontiguousarray(tensor, dtype=_DTYPE).tobytes())


def load(path) -> PredictionLog:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise LogFormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 16:
        raise LogFormatError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise LogFormatError(f"{path}: version mismatch, file has {version}, reader supports {FORMAT_VERSION}")
    (mlen,) = struct.unpack_from("<Q", data, 8)
    start = 16 + mlen
    if start > len(data):
        raise LogFormatError(f"{path}: truncated manifest")
    try:
        manifest = Manifest.from_dict(json.loads(data[16:start].decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise LogFormatError(f"{path}: invalid manifest: {exc}") from exc
    expected = int(np.prod(manifest.shape, dtype=np.int64)) * _DTYPE.itemsize
    body = data[start:]
    if len(body) != expected:
        kind = "truncated tensor" if len(body) < expected else "trailing bytes after tensor"
        raise LogFormatError(f"{path}: {kind} ({len(body)} bytes, expected {expected})")
    tensor = np.frombuffer(body, dtype=_DTYPE).reshape(manifest.shape)
    if tensor.size and tensor.max() >= manifest.num_classes:
        raise LogFormatError(f"{path}: stored label >= num_classes {manifest.num_classes}")
    log = create_log(manifest)
    log._pred[...] = tensor
    log._filled[...] = True
    return log


def export_csv(log: PredictionLog, path):
    tensor = log.tensor()
    E, N, M = tensor.shape
    with atomic_write(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for e in range(E):
            for i in range(N):
                row = tensor[e, i]
                w.writerows((e, i, j, int(row[j])) for j in range(M))


def import_csv(path, manifest: Manifest) -> PredictionLog:
    """Fill a log from the cell-per-row CSV layout.

    Every ``(extent, model)`` row must be complete; duplicated cells, cells
    outside the manifest, and labels ``>= num_classes`` are rejected.
    """
    log = create_log(manifest)
    E, N, M = manifest.shape
    seen = np.zeros(manifest.shape, dtype=bool)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise LogFormatError(f"{path}: header must be {','.join(CSV_HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4:
                raise LogFormatError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
            try:
                e, i, j, lab = (int(x) for x in rec)
            except ValueError as exc:
                raise LogFormatError(f"{path}:{lineno}: non-integer field") from exc
            if not (0 <= e < E and 0 <= i < N and 0 <= j < M):
                raise LogFormatError(f"{path}:{lineno}: cell ({e},{i},{j}) outside manifest shape {manifest.shape}")
            if not (0 <= lab < manifest.num_classes):
                raise LogFormatError(f"{path}:{lineno}: label {lab} outside [0, {manifest.num_classes})")
            if seen[e, i, j]:
                raise LogFormatError(f"{path}:{lineno}: duplicate cell ({e},{i},{j})")
            seen[e, i, j] = True
            log._pred[e, i, j] = lab
    complete = seen.all(axis=2)
    partial = seen.any(axis=2) & ~complete
    if partial.any():
        e, i = np.argwhere(partial)[0]
        raise LogFormatError(f"{path}: incomplete row for extent {e}, model {i}")
    log._filled[...] = complete
    return log


def load_manifest_json(path) -> Manifest:
    with open(path) as fh:
        return Manifest.from_dict(json.load(fh))
