"""Canned experiments: dataset -> trained ensembles -> logs, metric tables and a report.

Every recipe is a pure function of its inputs and ``seed``; the learner
seeds inside the supplied configs are replaced by substreams of ``seed``.
A :class:`Bundle` is written as::

    out/manifest.json
    out/logs/<name>.plog
    out/metrics/<name>.csv
    out/report.json
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import datasets as ds_mod
from ._utils import atomic_dir, atomic_write, check_positive_int, substream, substream_seed, to_jsonable
from .compare import compare_collections, correlate_accessibility, ensemble_accuracy
from .datasets import GaborConfig, LabeledDataset
from .learners import BoostConfig, MlpConfig, train_adaboost, train_mlp_ensemble
from .metrics import (HistogramMatrix, ScoreVector, accessibility, agreement, bimodality_or_nan,
                      condensed, condensed_agreement, learned_epoch_boxes, tp_agreement,
                      write_boxes_csv, write_histogram_csv, write_scores_csv)
from .nullmodel import null_from
from .predlog import PredictionLog, accuracy_table, log_from_tensor, save, subset_models

# substream keys under the experiment seed
KEY_DATA, KEY_MLP, KEY_NULL, KEY_BOOST, KEY_SHUFFLE, KEY_PART, KEY_NOISE = range(7)

STRUCTURED_MLP = MlpConfig(layer_widths=(128,), learning_rate=0.04, batch_size=100,
                           epoch_schedule=(1, 2, 3, 5, 8, 12))
# Memorizing random labels needs a noisier SGD to finish within the schedule.
RANDOM_LABEL_MLP = MlpConfig(layer_widths=(256,), learning_rate=0.2, batch_size=10,
                             epoch_schedule=(1, 2, 3, 5, 8, 12, 20, 30))
GAUSSIAN_MLP = MlpConfig(layer_widths=(64, 64), learning_rate=0.04, batch_size=100,
                         dropout_rate=0.5, epoch_schedule=(1, 2, 3, 5, 8, 12, 20, 30))
GABOR_MLP = MlpConfig(layer_widths=(256,), learning_rate=0.04, batch_size=100,
                      epoch_schedule=(1, 2, 3, 5, 8, 12, 20))
DEFAULT_BOOST = BoostConfig()
GAUSSIAN_DEFAULTS = {"dim": 256, "mean_shift": 0.1, "n_train_per_class": 1000, "n_test_per_class": 200}

EXTENT_COLUMNS = ["extent_index", "extent", "ensemble_accuracy", "mean_accuracy", "bimodality",
                  "null_bimodality", "mean_agreement", "null_mean_agreement"]


@dataclass(frozen=True)
class Table:
    header: list
    rows: list


@dataclass
class Bundle:
    """Everything one recipe run produced.

    ``logs`` and ``metrics`` are keyed by file stem; ``report`` holds the
    scalar summaries that the acceptance checks read.
    """

    recipe: str
    seed: int
    config: dict
    logs: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def write(self, out_dir):
        return write_bundle(self, out_dir)


def write_bundle(bundle: Bundle, out_dir) -> Path:
    out = Path(out_dir)
    with atomic_dir(out) as stage:
        for name in sorted(bundle.logs):
            save(bundle.logs[name], stage / "logs" / f"{name}.plog")
        for name in sorted(bundle.metrics):
            _write_metric(bundle.metrics[name], stage / "metrics" / f"{name}.csv")
        manifest = {
            "recipe": bundle.recipe,
            "seed": bundle.seed,
            "version": __version__,
            "config": bundle.config,
            "logs": {n: {"path": f"logs/{n}.plog", "manifest": bundle.logs[n].manifest.to_dict()}
                     for n in sorted(bundle.logs)},
            "metrics": [f"metrics/{n}.csv" for n in sorted(bundle.metrics)],
        }
        _write_json(manifest, stage / "manifest.json")
        _write_json(bundle.report, stage / "report.json")
    return out


def _write_json(obj, path):
    with atomic_write(path) as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_metric(obj, path):
    if isinstance(obj, HistogramMatrix):
        write_histogram_csv(obj, path)
    elif isinstance(obj, ScoreVector):
        write_scores_csv(obj, path)
    elif isinstance(obj, list):
        write_boxes_csv(obj, path)
    else:
        with atomic_write(path, newline="") as fh:
            w = csv.writer(fh)
            w.writerow(obj.header)
            w.writerows(obj.rows)


# --------------------------------------------------------------------------- scoring

def _nanmin(values):
    finite = [v for v in values if not math.isnan(v)]
    return min(finite) if finite else math.nan


def _halves_r(log, labels):
    n = log.manifest.num_models
    if n < 2:
        return None
    a, b = subset_models(log, range(n // 2)), subset_models(log, range(n // 2, n))
    try:
        r, lp = correlate_accessibility(a, labels, b, labels)
    except ValueError:
        return None
    return {"r": r, "log10_p": lp}


def score_labeled(bundle, name, log, labels, seed, *, bins=50, bin_fraction=0.05):
    """Add the standard metric tables for a labeled log and its matched null."""
    null = null_from(log, labels, substream_seed(seed, KEY_NULL))
    bundle.logs[name] = log
    bundle.logs[f"{name}_null"] = null
    sched = log.manifest.epoch_schedule
    ens = ensemble_accuracy(log, labels)
    mean_acc = accuracy_table(log, labels).mean(axis=1)
    rows = []
    for e, extent in enumerate(sched):
        rows.append([e, extent, float(ens[e]), float(mean_acc[e]),
                     bimodality_or_nan(tp_agreement(log, labels, e).values),
                     bimodality_or_nan(tp_agreement(null, labels, e).values),
                     float(agreement(log, e).values.mean()), float(agreement(null, e).values.mean())])
    bundle.metrics[f"{name}_extents"] = Table(EXTENT_COLUMNS, rows)
    bundle.metrics[f"{name}_condensed_tpa"] = condensed(log, labels, bins)
    bundle.metrics[f"{name}_null_condensed_tpa"] = condensed(null, labels, bins)
    bundle.metrics[f"{name}_condensed_agreement"] = condensed_agreement(log, bins)
    bundle.metrics[f"{name}_null_condensed_agreement"] = condensed_agreement(null, bins)
    bundle.metrics[f"{name}_accessibility"] = accessibility(log, labels)
    bundle.metrics[f"{name}_learned_epoch_boxes"] = learned_epoch_boxes(log, labels, bin_fraction)
    cols = list(zip(*rows))
    summary = {h: list(c) for h, c in zip(EXTENT_COLUMNS[1:], cols[1:])}
    summary["min_bimodality"] = _nanmin(summary["bimodality"])
    summary["disjoint_halves"] = _halves_r(log, labels)
    bundle.report.setdefault("collections", {})[name] = summary
    return null


def permuted_null(log: PredictionLog, seed) -> PredictionLog:
    """Shuffle each (extent, model) row across examples independently.

    Keeps every model's predicted-label histogram and removes any alignment
    between models.
    """
    m = log.manifest
    tensor = log.tensor().copy()
    for e in range(m.num_extents):
        for i in range(m.num_models):
            tensor[e, i] = substream(seed, e, i).permutation(tensor[e, i])
    return log_from_tensor(m.replace(learner_tag=f"{m.learner_tag}+perm"), tensor)


def score_unlabeled(bundle, name, log, placeholder_labels, seed, *, bins=50):
    """Agreement tables for an eval-only log.

    The matched null uses the dataset's placeholder labels as its accuracy
    reference; a row-permutation null is reported alongside it.
    """
    null = null_from(log, placeholder_labels, substream_seed(seed, KEY_NULL))
    perm = permuted_null(log, substream_seed(seed, KEY_NULL, 1))
    bundle.logs[name] = log
    bundle.logs[f"{name}_null"] = null
    sched = log.manifest.epoch_schedule
    rows = [[e, extent, float(agreement(log, e).values.mean()), float(agreement(null, e).values.mean()),
             float(agreement(perm, e).values.mean())] for e, extent in enumerate(sched)]
    header = ["extent_index", "extent", "mean_agreement", "null_mean_agreement", "permuted_mean_agreement"]
    bundle.metrics[f"{name}_extents"] = Table(header, rows)
    bundle.metrics[f"{name}_condensed_agreement"] = condensed_agreement(log, bins)
    bundle.metrics[f"{name}_null_condensed_agreement"] = condensed_agreement(null, bins)
    cols = list(zip(*rows))
    bundle.report.setdefault("collections", {})[name] = {h: list(c) for h, c in zip(header[1:], cols[1:])}
    return null


# --------------------------------------------------------------------------- recipes

def _mlp_for(config, seed, *key):
    return replace(config, seed=substream_seed(seed, KEY_MLP, *key))


def _describe(ds: LabeledDataset):
    return {"provenance": ds.provenance, "split": ds.split, "num_classes": ds.num_classes,
            "n_examples": ds.n_examples, "n_features": ds.n_features}


def _base_config(mlp, n_models, **extra):
    return {"mlp": mlp.to_dict(), "n_models": n_models, **extra}


def run_structured(train, test, mlp: MlpConfig = STRUCTURED_MLP, n_models=20, seed=0, *,
                   jobs=1, bins=50, bin_fraction=0.05) -> Bundle:
    """Ensemble on a natural dataset with real-vs-null comparisons on both splits."""
    n_models = check_positive_int(n_models, "n_models")
    cfg = _mlp_for(mlp, seed, 0)
    train_log, (test_log,) = train_mlp_ensemble(train, [test], cfg, n_models, n_jobs=jobs)
    bundle = Bundle("structured", int(seed), _base_config(cfg, n_models, train=_describe(train),
                                                          test=_describe(test)))
    score_labeled(bundle, "train", train_log, train.labels, substream_seed(seed, 0), bins=bins,
                  bin_fraction=bin_fraction)
    score_labeled(bundle, "test", test_log, test.labels, substream_seed(seed, 1), bins=bins,
                  bin_fraction=bin_fraction)
    return bundle


def run_gaussian(gaussian=None, mlp: MlpConfig = GAUSSIAN_MLP, n_models=30, seed=0, *,
                 jobs=1, bins=50, bin_fraction=0.05) -> Bundle:
    """Two overlapping Gaussian classes; ``gaussian`` overrides :data:`GAUSSIAN_DEFAULTS`."""
    params = {**GAUSSIAN_DEFAULTS, **(gaussian or {})}
    unknown = set(params) - set(GAUSSIAN_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown gaussian fields: {sorted(unknown)}")
    train, test = ds_mod.gen_gaussian(seed=substream_seed(seed, KEY_DATA), **params)
    bundle = run_structured(train, test, mlp, n_models, seed, jobs=jobs, bins=bins,
                            bin_fraction=bin_fraction)
    bundle.recipe = "gaussian"
    bundle.config["gaussian"] = params
    return bundle


def run_random_labels(train, test, mlp: MlpConfig = RANDOM_LABEL_MLP, n_models=20, seed=0, *,
                      n_examples=1000, jobs=1, bins=50, bin_fraction=0.05) -> Bundle:
    """Memorization regime on a training subset whose labels are redrawn uniformly.

    Test labels are redrawn too, from an independent stream.
    """
    n_examples = min(check_positive_int(n_examples, "n_examples"), train.n_examples)
    idx = np.sort(substream(seed, KEY_DATA).choice(train.n_examples, n_examples, replace=False))
    shuffled = ds_mod.shuffle_labels(train.subset(idx), substream_seed(seed, KEY_SHUFFLE, 0))
    test = ds_mod.shuffle_labels(test, substream_seed(seed, KEY_SHUFFLE, 1))
    bundle = run_structured(shuffled, test, mlp, n_models, seed, jobs=jobs, bins=bins,
                            bin_fraction=bin_fraction)
    bundle.recipe = "random-labels"
    bundle.config["n_examples"] = n_examples
    return bundle


def run_gabor(gabor: GaborConfig | None = None, mlp: MlpConfig = GABOR_MLP, n_models=20, seed=0, *,
              jobs=1, bins=50, bin_fraction=0.05) -> Bundle:
    gabor = gabor or GaborConfig()
    train, test = ds_mod.gen_gabor(gabor, substream_seed(seed, KEY_DATA))
    bundle = run_structured(train, test, mlp, n_models, seed, jobs=jobs, bins=bins,
                            bin_fraction=bin_fraction)
    bundle.recipe = "gabor"
    bundle.config["gabor"] = asdict(gabor)
    return bundle


def run_partitions(train, test, parts=2, mlp: MlpConfig = STRUCTURED_MLP, n_models=10, seed=0, *,
                   jobs=1, bins=50, bin_fraction=0.05) -> Bundle:
    """One ensemble per disjoint training partition, all evaluated on ``test``.

    With ``parts=1`` the single ensemble is the one :func:`run_structured`
    trains for the same seed.
    """
    parts = check_positive_int(parts, "parts")
    pieces = ds_mod.partition(train, parts, substream_seed(seed, KEY_PART))
    bundle = Bundle("partitions", int(seed), _base_config(mlp, n_models, parts=parts,
                                                          train=_describe(train), test=_describe(test)))
    test_logs = []
    for p, piece in enumerate(pieces):
        cfg = _mlp_for(mlp, seed, p)
        _, (log,) = train_mlp_ensemble(piece, [test], cfg, n_models, n_jobs=jobs)
        score_labeled(bundle, f"part{p}_test", log, test.labels, substream_seed(seed, 2, p), bins=bins,
                      bin_fraction=bin_fraction)
        test_logs.append(log)
    pairs = []
    for a in range(parts):
        for b in range(a + 1, parts):
            try:
                r, lp = correlate_accessibility(test_logs[a], test.labels, test_logs[b], test.labels)
            except ValueError:  # constant accessibility in one part
                r, lp = math.nan, math.nan
            pairs.append({"part_a": a, "part_b": b, "r": r, "log10_p": lp})
    bundle.metrics["partition_correlations"] = Table(
        ["part_a", "part_b", "pearson_r", "log10_p"], [[p["part_a"], p["part_b"], p["r"], p["log10_p"]]
                                                       for p in pairs])
    bundle.report["partition_correlations"] = pairs
    bundle.report["partition_sizes"] = [p.n_examples for p in pieces]
    return bundle


def _comparison(bundle, key, log_a, log_b, labels, n_bins):
    rep = compare_collections(log_a, log_b, labels, n_bins=n_bins)
    bundle.report.setdefault("comparisons", {})[key] = rep.to_dict()
    bundle.metrics[f"{key}_bins"] = Table(
        ["bin_center", "bin_low", "bin_high", "mean", "stderr", "count"],
        [[b.center, b.low, b.high, "" if b.mean is None else b.mean, "" if b.stderr is None else b.stderr,
          b.count] for b in rep.binned])
    return rep


def run_paradigms(train, test, mlp: MlpConfig = STRUCTURED_MLP, boost: BoostConfig = DEFAULT_BOOST,
                  n_models=10, seed=0, *, jobs=1, bins=50, bin_fraction=0.05, n_bins=10) -> Bundle:
    """Two independent MLP ensembles and one SAMME booster on the same data.

    Reports accessibility correlations MLP-vs-MLP and MLP-vs-boosting on
    both splits, with the booster's scores binned against the first MLP
    ensemble's.
    """
    cfg_a, cfg_b = _mlp_for(mlp, seed, 0), _mlp_for(mlp, seed, 1)
    bcfg = replace(boost, seed=substream_seed(seed, KEY_BOOST))
    a_train, (a_test,) = train_mlp_ensemble(train, [test], cfg_a, n_models, n_jobs=jobs)
    b_train, (b_test,) = train_mlp_ensemble(train, [test], cfg_b, n_models, n_jobs=jobs)
    s_train, (s_test,) = train_adaboost(train, [test], bcfg, 1)
    bundle = Bundle("paradigms", int(seed), {
        "mlp_a": cfg_a.to_dict(), "mlp_b": cfg_b.to_dict(), "boost": bcfg.to_dict(), "n_models": n_models,
        "train": _describe(train), "test": _describe(test)})
    opts = {"bins": bins, "bin_fraction": bin_fraction}
    for k, (name, log, ds) in enumerate((("mlp_a_train", a_train, train), ("mlp_a_test", a_test, test),
                                         ("mlp_b_train", b_train, train), ("mlp_b_test", b_test, test),
                                         ("boost_train", s_train, train), ("boost_test", s_test, test))):
        score_labeled(bundle, name, log, ds.labels, substream_seed(seed, 3, k), **opts)
    corr = {}
    for split, ds, a, b, s in (("train", train, a_train, b_train, s_train), ("test", test, a_test, b_test, s_test)):
        corr[f"mlp_vs_mlp_{split}"] = _comparison(bundle, f"mlp_vs_mlp_{split}", a, b, ds.labels, n_bins).pearson_r
        corr[f"mlp_vs_boost_{split}"] = _comparison(bundle, f"mlp_vs_boost_{split}", a, s, ds.labels,
                                                    n_bins).pearson_r
    bundle.report["correlations"] = corr
    return bundle


def run_out_of_sample(train, test, mlp: MlpConfig = STRUCTURED_MLP, n_models=20, seed=0, *,
                      noise_count=1000, jobs=1, bins=50, bin_fraction=0.05) -> Bundle:
    """Train once and evaluate on held-out data and on Gaussian noise images."""
    noise = ds_mod.gen_noise(noise_count, train.n_features, substream_seed(seed, KEY_NOISE), train.num_classes)
    cfg = _mlp_for(mlp, seed, 0)
    train_log, (test_log, noise_log) = train_mlp_ensemble(train, [test, noise], cfg, n_models, n_jobs=jobs)
    bundle = Bundle("oos", int(seed), _base_config(cfg, n_models, train=_describe(train), test=_describe(test),
                                                   noise=_describe(noise)))
    opts = {"bins": bins, "bin_fraction": bin_fraction}
    score_labeled(bundle, "train", train_log, train.labels, substream_seed(seed, 0), **opts)
    score_labeled(bundle, "test", test_log, test.labels, substream_seed(seed, 1), **opts)
    score_unlabeled(bundle, "noise", noise_log, noise.labels, substream_seed(seed, 4), bins=bins)
    cols = bundle.report["collections"]
    bundle.report["mean_agreement"] = {
        "test": float(np.mean(cols["test"]["mean_agreement"])),
        "noise": float(np.mean(cols["noise"]["mean_agreement"])),
        "noise_null": float(np.mean(cols["noise"]["null_mean_agreement"])),
        "noise_permuted": float(np.mean(cols["noise"]["permuted_mean_agreement"])),
    }
    return bundle


# --------------------------------------------------------------------------- JSON front end

RECIPES = ("structured", "gaussian", "random-labels", "gabor", "partitions", "paradigms", "oos")
_TOP_KEYS = {"recipe", "seed", "n_models", "dataset", "mlp", "boost", "gaussian", "gabor", "n_examples",
             "parts", "noise_count", "bins", "bin_fraction", "n_bins", "_base_dir"}
_DATASET_KEYS = {"format", "train_images", "train_labels", "test_images", "test_labels", "train", "test",
                 "num_classes", "train_limit", "test_limit", "normalize"}
_DEFAULT_MLP = {"gaussian": GAUSSIAN_MLP, "random-labels": RANDOM_LABEL_MLP, "gabor": GABOR_MLP}


def load_experiment(path) -> dict:
    """Read an experiment JSON file; relative data paths resolve against its directory."""
    path = Path(path)
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: experiment file must hold a JSON object")
    cfg.setdefault("_base_dir", str(path.parent))
    return cfg


def _load_dataset(section, base_dir):
    unknown = set(section) - _DATASET_KEYS
    if unknown:
        raise ValueError(f"unknown dataset fields: {sorted(unknown)}")
    base = Path(base_dir or ".")

    def p(key):
        if key not in section:
            raise ValueError(f"dataset.{key} is required for format {section.get('format')!r}")
        return base / section[key]

    k = int(section.get("num_classes", 10))
    fmt = section.get("format", "idx")
    if fmt == "idx":
        train = ds_mod.load_idx(p("train_images"), p("train_labels"), k, "train")
        test = ds_mod.load_idx(p("test_images"), p("test_labels"), k, "test")
    elif fmt == "csv":
        train = ds_mod.load_features_csv(p("train"), k, "train")
        test = ds_mod.load_features_csv(p("test"), k, "test")
    else:
        raise ValueError(f"dataset.format must be 'idx' or 'csv', got {fmt!r}")
    if section.get("train_limit") is not None:
        train = train.subset(np.arange(min(int(section["train_limit"]), train.n_examples)))
    if section.get("test_limit") is not None:
        test = test.subset(np.arange(min(int(section["test_limit"]), test.n_examples)))
    if section.get("normalize"):
        train, test = ds_mod.normalize_per_feature(train, test)
    return train, test


def run_experiment(config: dict, seed=None, jobs=1) -> Bundle:
    """Dispatch an experiment description to its recipe.

    ``seed`` overrides ``config["seed"]`` when given.
    """
    unknown = set(config) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
    recipe = config.get("recipe")
    if recipe not in RECIPES:
        raise ValueError(f"recipe must be one of {RECIPES}, got {recipe!r}")
    seed = int(config.get("seed", 0) if seed is None else seed)
    mlp = _DEFAULT_MLP.get(recipe, STRUCTURED_MLP)
    if "mlp" in config:
        mlp = MlpConfig.from_dict({**mlp.to_dict(), **config["mlp"]})
    opts = {"jobs": jobs, "bins": int(config.get("bins", 50)),
            "bin_fraction": float(config.get("bin_fraction", 0.05))}
    n = config.get("n_models")
    if recipe == "gaussian":
        return run_gaussian(config.get("gaussian"), mlp, n or 30, seed, **opts)
    if recipe == "gabor":
        gabor = GaborConfig(**config["gabor"]) if "gabor" in config else None
        return run_gabor(gabor, mlp, n or 20, seed, **opts)
    if "dataset" not in config:
        raise ValueError(f"recipe {recipe!r} needs a 'dataset' section")
    train, test = _load_dataset(config["dataset"], config.get("_base_dir"))
    if recipe == "structured":
        return run_structured(train, test, mlp, n or 20, seed, **opts)
    if recipe == "random-labels":
        return run_random_labels(train, test, mlp, n or 20, seed,
                                 n_examples=int(config.get("n_examples", 1000)), **opts)
    if recipe == "partitions":
        return run_partitions(train, test, int(config.get("parts", 2)), mlp, n or 10, seed, **opts)
    if recipe == "paradigms":
        boost = BoostConfig.from_dict({**DEFAULT_BOOST.to_dict(), **config.get("boost", {})})
        return run_paradigms(train, test, mlp, boost, n or 10, seed,
                             n_bins=int(config.get("n_bins", 10)), **opts)
    return run_out_of_sample(train, test, mlp, n or 20, seed,
                             noise_count=int(config.get("noise_count", 1000)), **opts)


__all__ = [
    "Bundle", "Table", "RECIPES", "load_experiment", "permuted_null", "run_experiment", "run_gabor",
    "run_gaussian", "run_out_of_sample", "run_paradigms", "run_partitions", "run_random_labels",
    "run_structured", "score_labeled", "score_unlabeled", "write_bundle",
]
