"""Trainers that turn datasets into prediction logs."""

from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed
from sklearn.utils.validation import check_array

from .._utils import check_positive_int, substream_seed
from ..predlog import Manifest, PredictionLog, create_log
from .boost import SAMMEClassifier
from .config import BoostConfig, MlpConfig
from .mlp import MLPClassifier, TrainingDivergedError


def predict(model, features):
    """Class ids by argmax of ``model``'s output scores (lowest index wins ties)."""
    X = check_array(np.atleast_2d(features))
    return model.classes_[np.argmax(model.decision_function(X), axis=1)]


def _check_sets(train, eval_sets):
    for ds in eval_sets:
        if ds.n_features != train.n_features:
            raise ValueError(f"dimension mismatch: train has d={train.n_features}, "
                             f"eval set {ds.provenance!r} has d={ds.n_features}")
        if ds.num_classes != train.num_classes:
            raise ValueError(f"class-count mismatch: train K={train.num_classes}, "
                             f"eval set {ds.provenance!r} K={ds.num_classes}")


def _mlp(config: MlpConfig, random_state):
    return MLPClassifier(hidden_layer_sizes=config.layer_widths, activation=config.activation,
                         learning_rate=config.learning_rate,
                         lr_decay_factor=config.lr_decay_factor, decay_every=config.decay_every,
                         batch_size=config.batch_size, dropout_rate=config.dropout_rate,
                         random_state=random_state)


def _run_to(model, X, y, classes, target_epoch, sets, out, slot):
    while model.epochs_done_ < target_epoch:
        model.partial_fit(X, y, classes=classes)
    for s, ds in enumerate(sets):
        out[s][slot] = predict(model, ds.features)


def _train_member(train, sets, config: MlpConfig, model_index):
    """Predictions of one ensemble member: list (per set) of (extents, M_set) arrays."""
    sched = config.epoch_schedule
    classes = np.arange(train.num_classes)
    out = [np.zeros((len(sched), ds.n_examples), dtype=np.int64) for ds in sets]
    X, y = train.features, train.labels
    try:
        if config.retrain_per_extent:
            for e, extent in enumerate(sched):
                model = _mlp(config, substream_seed(config.seed, model_index, e))
                model.initialize(X.shape[1], classes)
                _run_to(model, X, y, classes, extent, sets, out, e)
        else:
            model = _mlp(config, substream_seed(config.seed, model_index))
            model.initialize(X.shape[1], classes)
            for e, extent in enumerate(sched):
                _run_to(model, X, y, classes, extent, sets, out, e)
    except FloatingPointError as exc:
        raise TrainingDivergedError(f"model {model_index}: {exc}", model_index) from exc
    return out


def _learner_tag_mlp(config):
    widths = "x".join(str(w) for w in config.layer_widths) or "linear"
    return f"mlp[{widths}]-{config.activation}-lr{config.learning_rate}"


def _empty_logs(sets, n_models, schedule, tag, seed):
    logs = []
    for ds in sets:
        manifest = Manifest(dataset_id=ds.provenance or "dataset", split=ds.split,
                            num_classes=ds.num_classes, num_examples=ds.n_examples,
                            num_models=n_models, epoch_schedule=tuple(schedule),
                            learner_tag=tag, seed=seed)
        logs.append(create_log(manifest))
    return logs


def train_mlp_ensemble(train, eval_sets, config: MlpConfig, n_models, n_jobs=1):
    """Train ``n_models`` independent networks and log their predictions.

    Model ``i`` draws initialization, batch order and dropout from the
    ``(config.seed, i)`` substream, so logs do not depend on ``n_jobs``.

    Returns
    -------
    (train_log, eval_logs) : PredictionLog, list of PredictionLog
    """
    n_models = check_positive_int(n_models, "n_models")
    eval_sets = list(eval_sets)
    _check_sets(train, eval_sets)
    sets = [train, *eval_sets]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_train_member)(train, sets, config, i) for i in range(n_models))
    logs = _empty_logs(sets, n_models, config.epoch_schedule, _learner_tag_mlp(config), config.seed)
    for i, per_set in enumerate(results):
        for log, preds in zip(logs, per_set):
            for e in range(len(config.epoch_schedule)):
                log.record_row(e, i, preds[e])
    return logs[0], logs[1:]


def _train_booster(train, sets, config: BoostConfig, model_index):
    booster = SAMMEClassifier(n_estimators=config.num_weak, weak_epochs=config.weak_epochs,
                              weak_lr=config.weak_lr, weak_batch_size=config.weak_batch_size,
                              max_retries=config.max_retries,
                              random_state=substream_seed(config.seed, model_index))
    booster.fit(train.features, train.labels, classes=np.arange(train.num_classes))
    wanted = {t: k for k, t in enumerate(config.snapshot_schedule)}
    out = [np.zeros((len(wanted), ds.n_examples), dtype=np.int64) for ds in sets]
    for s, ds in enumerate(sets):
        for t, pred in enumerate(booster.staged_predict(ds.features), start=1):
            if t in wanted:
                out[s][wanted[t]] = pred
    return out, booster.n_rounds_


def train_adaboost(train, eval_sets, config: BoostConfig, n_models=1, n_jobs=1):
    """Boost ``n_models`` SAMME ensembles and log predictions at each snapshot.

    Extents are weak-learner counts. If boosting stops early, the schedule
    is truncated to the snapshots every booster reached.

    Returns
    -------
    (train_log, eval_logs) : PredictionLog, list of PredictionLog
    """
    n_models = check_positive_int(n_models, "n_models")
    eval_sets = list(eval_sets)
    _check_sets(train, eval_sets)
    sets = [train, *eval_sets]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_train_booster)(train, sets, config, i) for i in range(n_models))
    reached = min(r for _, r in results)
    schedule = [t for t in config.snapshot_schedule if t <= reached]
    if not schedule:
        raise RuntimeError(f"boosting accepted only {reached} rounds, before the first snapshot")
    tag = f"samme[T={config.num_weak}]-linear-lr{config.weak_lr}"
    logs = _empty_logs(sets, n_models, schedule, tag, config.seed)
    for i, (per_set, _) in enumerate(results):
        for log, preds in zip(logs, per_set):
            for e in range(len(schedule)):
                log.record_row(e, i, preds[e])
    return logs[0], logs[1:]


__all__ = ["predict", "train_mlp_ensemble", "train_adaboost", "PredictionLog"]
