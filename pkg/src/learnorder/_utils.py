"""Small shared helpers: atomic file output, seed substreams, argument checks."""

from __future__ import annotations

import contextlib
import math
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np


@contextlib.contextmanager
def atomic_write(path, mode="w", **kwargs):
    """Open ``path`` for writing through a temporary sibling file.

    The temporary file is renamed onto ``path`` only when the block exits
    without an exception, so readers never observe a partially written file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@contextlib.contextmanager
def atomic_dir(path):
    """Stage a multi-file output in a temporary sibling directory.

    Files are moved into ``path`` only when the block succeeds; on failure
    the staging directory is removed and ``path`` is left untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent))
    try:
        yield staging
        for src in sorted(p for p in staging.rglob("*") if p.is_file()):
            dst = path / src.relative_to(staging)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def substream(seed, *key) -> np.random.Generator:
    """Independent generator for the stream addressed by ``(seed, *key)``.

    Streams with different keys are statistically independent and do not
    depend on the order in which they are created.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def substream_seed(seed, *key) -> int:
    """A 63-bit integer seed drawn from the ``(seed, *key)`` substream."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def check_positive_int(value, name, minimum=1):
    if isinstance(value, (bool, np.bool_)) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_schedule(schedule, name="epoch_schedule"):
    """Validate a strictly increasing list of non-negative integers."""
    sched = tuple(int(s) for s in schedule)
    if not sched:
        raise ValueError(f"{name} must be non-empty")
    if any(s < 0 for s in sched):
        raise ValueError(f"{name} entries must be non-negative, got {list(sched)}")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError(f"{name} must be strictly increasing, got {list(sched)}")
    return sched


def to_jsonable(obj):
    """Replace numpy scalars and non-finite floats so ``json.dump`` emits strict JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj
