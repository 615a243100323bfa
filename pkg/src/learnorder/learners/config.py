"""Learner configurations, readable from experiment JSON."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from .._utils import check_positive_int, check_schedule

ACTIVATIONS = ("relu", "identity", "tanh")


def _from_dict(cls, d):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**d)


@dataclass(frozen=True)
class MlpConfig:
    """Fully connected network and SGD schedule for one ensemble.

    ``layer_widths`` lists the hidden layers only; input and output sizes
    come from the data. The learning rate is divided by ``lr_decay_factor``
    every ``decay_every`` epochs (``decay_every=0`` disables decay).
    """

    layer_widths: tuple = (1024, 1024)
    activation: str = "relu"
    learning_rate: float = 0.04
    lr_decay_factor: float = 1.0
    decay_every: int = 0
    batch_size: int = 100
    epoch_schedule: tuple = (0, 1, 2, 5, 10, 20)
    dropout_rate: float = 0.0
    seed: int = 0
    retrain_per_extent: bool = False

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {list(widths)}")
        object.__setattr__(self, "layer_widths", widths)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be a positive finite number")
        if not self.lr_decay_factor >= 1:
            raise ValueError("lr_decay_factor must be >= 1")
        if self.decay_every < 0:
            raise ValueError("decay_every must be >= 0")
        check_positive_int(self.batch_size, "batch_size")
        object.__setattr__(self, "epoch_schedule", check_schedule(self.epoch_schedule))
        if not (0 <= self.dropout_rate < 1):
            raise ValueError("dropout_rate must lie in [0, 1)")

    to_dict = asdict

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)


@dataclass(frozen=True)
class BoostConfig:
    """SAMME boosting with softmax-regression weak learners.

    ``snapshot_schedule`` lists weak-learner counts at which the boosted
    ensemble's predictions are logged.
    """

    num_weak: int = 100
    weak_epochs: int = 1
    weak_lr: float = 0.01
    weak_batch_size: int = 100
    snapshot_schedule: tuple = field(default=(1, 2, 5, 10, 20, 50, 100))
    max_retries: int = 5
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.num_weak, "num_weak")
        check_positive_int(self.weak_epochs, "weak_epochs")
        check_positive_int(self.weak_batch_size, "weak_batch_size")
        if not (self.weak_lr > 0 and math.isfinite(self.weak_lr)):
            raise ValueError("weak_lr must be a positive finite number")
        sched = check_schedule(self.snapshot_schedule, "snapshot_schedule")
        if sched[0] < 1 or sched[-1] > self.num_weak:
            raise ValueError(f"snapshot_schedule must lie in [1, num_weak={self.num_weak}]")
        object.__setattr__(self, "snapshot_schedule", sched)
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    to_dict = asdict

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d)
