"""Command-line front end: ``learnorder <group> <command> [options]``.

Tables are written as CSV and summaries as JSON. Every output goes through
a temporary file that is renamed into place only after the command has
finished computing, so a failing command leaves no partial files.
Usage errors exit with status 2, runtime errors with status 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
import tempfile
from pathlib import Path

from . import compare, datasets, experiments, metrics, nullmodel, predlog
from ._utils import atomic_dir, atomic_write
from .learners import BoostConfig, MlpConfig, train_adaboost, train_mlp_ensemble


class UsageError(Exception):
    """Bad arguments that argparse itself cannot detect."""


# --------------------------------------------------------------------------- output helpers

def _emit(args, writer):
    """Run ``writer(path)`` against ``--out`` or, without it, stream the result to stdout."""
    if args.out:
        writer(Path(args.out))
        return
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "out"
        writer(path)
        with open(path) as fh:
            shutil.copyfileobj(fh, sys.stdout)


def _need_out_dir(args):
    if not args.out:
        raise UsageError("--out DIR is required for this command")
    return Path(args.out)


def _table_writer(header, rows):
    def write(path):
        with atomic_write(path, newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
    return write


def _schedule(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --------------------------------------------------------------------------- inputs

def _dataset(path, num_classes, split="train"):
    return datasets.load_features_csv(path, num_classes, split)


def _read_log(path, manifest=None):
    """A ``.plog`` file, or a cell-per-row CSV log together with its JSON manifest."""
    if str(path).endswith(".csv"):
        if not manifest:
            raise UsageError(f"{path}: a CSV log needs --manifest")
        return predlog.import_csv(path, predlog.load_manifest_json(manifest))
    return predlog.load(path)


def _log_and_labels(args, log_attr="log", data_attr="data"):
    log = _read_log(getattr(args, log_attr), getattr(args, log_attr.replace("log", "manifest"), None))
    data = getattr(args, data_attr)
    ds = _dataset(data, log.manifest.num_classes, "test")
    if ds.n_examples != log.manifest.num_examples:
        raise ValueError(f"{data} has {ds.n_examples} examples but the log has {log.manifest.num_examples}")
    return log, ds.labels


def _extent(log, index):
    E = log.manifest.num_extents
    if index is None:
        return E - 1
    if not -E <= index < E:
        raise ValueError(f"extent index {index} out of range for {E} extents")
    return index % E


# --------------------------------------------------------------------------- gen / data

def _write_split(out, train, test):
    with atomic_dir(out) as stage:
        datasets.export_features_csv(train, stage / "train.csv")
        datasets.export_features_csv(test, stage / "test.csv")


def cmd_gen_gaussian(args):
    out = _need_out_dir(args)
    train, test = datasets.gen_gaussian(args.dim, args.mean_shift, args.n_train_per_class,
                                        args.n_test_per_class, args.seed)
    _write_split(out, train, test)


def cmd_gen_gabor(args):
    out = _need_out_dir(args)
    fields = _read_json(args.config) if args.config else {}
    for key in ("image_size", "n_train_per_class", "n_test_per_class"):
        if getattr(args, key) is not None:
            fields[key] = getattr(args, key)
    cfg = datasets.GaborConfig(**fields)
    train, test = datasets.gen_gabor(cfg, args.seed)
    _write_split(out, train, test)


def cmd_gen_noise(args):
    ds = datasets.gen_noise(args.count, args.dim, args.seed, args.num_classes)
    _emit(args, lambda p: datasets.export_features_csv(ds, p))


def cmd_gen_shuffle_labels(args):
    ds = datasets.shuffle_labels(_dataset(args.input, args.num_classes), args.seed)
    _emit(args, lambda p: datasets.export_features_csv(ds, p))


def cmd_gen_partition(args):
    out = _need_out_dir(args)
    pieces = datasets.partition(_dataset(args.input, args.num_classes), args.parts, args.seed)
    with atomic_dir(out) as stage:
        for p, piece in enumerate(pieces):
            datasets.export_features_csv(piece, stage / f"part{p}.csv")


def cmd_data_load_idx(args):
    ds = datasets.load_idx(args.images, args.labels, args.num_classes, args.split)
    _emit(args, lambda p: datasets.export_features_csv(ds, p))


def cmd_data_load_csv(args):
    ds = _dataset(args.input, args.num_classes, args.split)
    _emit(args, lambda p: datasets.export_features_csv(ds, p))


def cmd_data_normalize(args):
    out = _need_out_dir(args)
    files = [Path(args.train), *map(Path, args.others)]
    names = [f.name for f in files]
    if len(set(names)) != len(names):
        raise UsageError("input files must have distinct names")
    sets = [_dataset(f, args.num_classes) for f in files]
    with atomic_dir(out) as stage:
        for f, ds in zip(files, datasets.normalize_per_feature(*sets)):
            datasets.export_features_csv(ds, stage / f.name)


# --------------------------------------------------------------------------- train

def _eval_sets(args, num_classes):
    sets = [_dataset(p, num_classes, "test") for p in args.eval]
    stems = ["train", *[Path(p).stem for p in args.eval]]
    if len(set(stems)) != len(stems):
        raise UsageError("eval files need distinct stems, none named 'train'")
    return sets, stems


def _save_logs(out, stems, logs):
    with atomic_dir(out) as stage:
        for stem, log in zip(stems, logs):
            predlog.save(log, stage / f"{stem}.plog")


def cmd_train_mlp(args):
    out = _need_out_dir(args)
    fields = _read_json(args.config) if args.config else {}
    overrides = {"layer_widths": args.hidden, "activation": args.activation, "learning_rate": args.lr,
                 "batch_size": args.batch_size, "epoch_schedule": args.epochs, "dropout_rate": args.dropout,
                 "retrain_per_extent": args.retrain_per_extent or None}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    fields["seed"] = args.seed
    cfg = MlpConfig.from_dict(fields)
    train = _dataset(args.train, args.num_classes)
    sets, stems = _eval_sets(args, args.num_classes)
    train_log, eval_logs = train_mlp_ensemble(train, sets, cfg, args.n_models, n_jobs=args.jobs)
    _save_logs(out, stems, [train_log, *eval_logs])


def cmd_train_adaboost(args):
    out = _need_out_dir(args)
    fields = _read_json(args.config) if args.config else {}
    overrides = {"num_weak": args.num_weak, "weak_epochs": args.weak_epochs, "weak_lr": args.weak_lr,
                 "snapshot_schedule": args.snapshots}
    fields.update({k: v for k, v in overrides.items() if v is not None})
    fields["seed"] = args.seed
    if "snapshot_schedule" not in fields and "num_weak" in fields:
        fields["snapshot_schedule"] = tuple(t for t in BoostConfig().snapshot_schedule if t <= fields["num_weak"])
    cfg = BoostConfig.from_dict(fields)
    train = _dataset(args.train, args.num_classes)
    sets, stems = _eval_sets(args, args.num_classes)
    train_log, eval_logs = train_adaboost(train, sets, cfg, args.n_models, n_jobs=args.jobs)
    _save_logs(out, stems, [train_log, *eval_logs])


# --------------------------------------------------------------------------- analyze

def cmd_analyze_tpa(args):
    log, labels = _log_and_labels(args)
    scores = metrics.tp_agreement(log, labels, _extent(log, args.extent))
    _emit(args, lambda p: metrics.write_scores_csv(scores, p))


def cmd_analyze_agreement(args):
    log = _read_log(args.log, args.manifest)
    scores = metrics.agreement(log, _extent(log, args.extent))
    _emit(args, lambda p: metrics.write_scores_csv(scores, p))


def cmd_analyze_accessibility(args):
    log, labels = _log_and_labels(args)
    scores = metrics.accessibility(log, labels)
    _emit(args, lambda p: metrics.write_scores_csv(scores, p))


def cmd_analyze_bimodality(args):
    if args.scores:
        if args.log or args.data:
            raise UsageError("use either --scores or --log/--data")
        value = metrics.bimodality(metrics.read_scores_csv(args.scores))
        _emit(args, _table_writer(["bimodality"], [[value]]))
        return
    if not args.log:
        raise UsageError("--log (or --scores) is required")
    log = _read_log(args.log, args.manifest)
    rows = []
    if args.kind == "tpa":
        if not args.data:
            raise UsageError("--data is required for --kind tpa")
        log, labels = _log_and_labels(args)
        for e, extent in enumerate(log.manifest.epoch_schedule):
            rows.append([e, extent, metrics.bimodality_or_nan(metrics.tp_agreement(log, labels, e).values)])
    else:
        for e, extent in enumerate(log.manifest.epoch_schedule):
            rows.append([e, extent, metrics.bimodality_or_nan(metrics.agreement(log, e).values)])
    _emit(args, _table_writer(["extent_index", "extent", "bimodality"], rows))


def cmd_analyze_condensed(args):
    if args.kind == "tpa":
        if not args.data:
            raise UsageError("--data is required for --kind tpa")
        log, labels = _log_and_labels(args)
        hist = metrics.condensed(log, labels, args.bins)
    else:
        hist = metrics.condensed_agreement(_read_log(args.log, args.manifest), args.bins)
    _emit(args, lambda p: metrics.write_histogram_csv(hist, p))


def cmd_analyze_learned_epoch(args):
    log, labels = _log_and_labels(args)
    if args.model is None:
        boxes = metrics.learned_epoch_boxes(log, labels, args.bin_fraction)
        _emit(args, lambda p: metrics.write_boxes_csv(boxes, p))
        return
    if not 0 <= args.model < log.manifest.num_models:
        raise ValueError(f"model index {args.model} out of range for {log.manifest.num_models} models")
    le = metrics.learned_epoch(log, labels, args.model)
    _emit(args, _table_writer(["example_index", "learned_epoch_index"], [[j, int(v)] for j, v in enumerate(le)]))


def cmd_analyze_modal(args):
    log = _read_log(args.log, args.manifest)
    labels = metrics.modal_label(log, _extent(log, args.extent))
    _emit(args, _table_writer(["example_index", "label"], [[j, int(v)] for j, v in enumerate(labels)]))


def cmd_analyze_trajectory(args):
    log, labels = _log_and_labels(args)
    if not 0 <= args.example < log.manifest.num_examples:
        raise ValueError(f"example index {args.example} out of range for {log.manifest.num_examples} examples")
    traj = metrics.trajectory(log, labels, args.example)
    rows = [[e, s, float(v)] for e, (s, v) in enumerate(zip(log.manifest.epoch_schedule, traj))]
    _emit(args, _table_writer(["extent_index", "extent", "tp_agreement"], rows))


# --------------------------------------------------------------------------- null / compare

def cmd_null(args):
    log, labels = _log_and_labels(args)
    null = nullmodel.null_from(log, labels, args.seed)
    if not args.out:
        raise UsageError("--out FILE is required for binary log output")
    predlog.save(null, args.out)


def _pair_logs(args):
    log_a = _read_log(args.log_a, args.manifest_a)
    log_b = _read_log(args.log_b, args.manifest_b)
    ds = _dataset(args.data, log_a.manifest.num_classes, "test")
    return log_a, log_b, ds.labels


def cmd_compare_match(args):
    log_a, log_b, labels = _pair_logs(args)
    res = compare.match_epochs(log_a, labels, log_b, args.tolerance)
    rows = [[p.extent_a, p.extent_b, p.accuracy_a, p.accuracy_b, p.kind] for p in res.pairs]
    rows += [["", jb, "", "", "unmatched"] for jb in res.unmatched_b]
    _emit(args, _table_writer(["extent_a", "extent_b", "accuracy_a", "accuracy_b", "kind"], rows))


def cmd_compare_overlap(args):
    log_a, log_b, labels = _pair_logs(args)
    res = compare.match_epochs(log_a, labels, log_b, args.tolerance)
    over = compare.overlap_counts(log_a, log_b, labels, res)
    rows = [[p.extent_a, p.extent_b, p.accuracy_a, p.accuracy_b, p.kind, o.both, o.only_a, o.only_b]
            for p, o in zip(res.pairs, over)]
    header = ["extent_a", "extent_b", "accuracy_a", "accuracy_b", "kind", "both", "only_a", "only_b"]
    _emit(args, _table_writer(header, rows))


def cmd_compare_correlate(args):
    log_a = _read_log(args.log_a, args.manifest_a)
    log_b = _read_log(args.log_b, args.manifest_b)
    la = _dataset(args.data_a, log_a.manifest.num_classes, "test").labels
    lb = _dataset(args.data_b or args.data_a, log_b.manifest.num_classes, "test").labels
    r, lp = compare.correlate_accessibility(log_a, la, log_b, lb)
    _emit(args, _table_writer(["pearson_r", "log10_p"], [[r, lp]]))


def cmd_compare_binned(args):
    x = metrics.read_scores_csv(args.x)
    y = metrics.read_scores_csv(args.y)
    bins = compare.binned_comparison(x, y, args.bins)
    rows = [[b.center, b.low, b.high, "" if b.mean is None else b.mean, "" if b.stderr is None else b.stderr,
             b.count] for b in bins]
    _emit(args, _table_writer(["bin_center", "bin_low", "bin_high", "mean", "stderr", "count"], rows))


def cmd_compare_report(args):
    out = _need_out_dir(args)
    log_a, log_b, labels = _pair_logs(args)
    compare.compare_collections(log_a, log_b, labels, args.tolerance, args.bins).write(out)


# --------------------------------------------------------------------------- exp

def cmd_exp(args):
    out = _need_out_dir(args)
    recipe = args.recipe
    if args.config:
        cfg = experiments.load_experiment(args.config)
    elif recipe in ("gaussian", "gabor"):
        cfg = {}
    else:
        raise UsageError(f"exp {recipe} needs --config with a 'dataset' section")
    if cfg.setdefault("recipe", recipe) != recipe:
        raise UsageError(f"config recipe {cfg['recipe']!r} does not match command {recipe!r}")
    seed = args.seed if args.seed_given else None
    bundle = experiments.run_experiment(cfg, seed=seed, jobs=args.jobs)
    bundle.write(out)


# --------------------------------------------------------------------------- parser

class _SeedAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, action=_SeedAction, help="random seed (default 0)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for ensemble training (default 1)")
    g.add_argument("--out", help="output file or directory; tables go to stdout when omitted")
    p.set_defaults(seed_given=False)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="learnorder", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", metavar="GROUP", required=True)

    def leaf(sub, name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    # gen
    gen = groups.add_parser("gen", help="generate or transform datasets").add_subparsers(
        dest="cmd", metavar="CMD", required=True)
    p = leaf(gen, "gaussian", cmd_gen_gaussian, "two Gaussian classes; writes train.csv and test.csv to --out DIR")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--mean-shift", type=float, default=0.1)
    p.add_argument("--n-train-per-class", type=int, default=1000)
    p.add_argument("--n-test-per-class", type=int, default=200)
    p = leaf(gen, "gabor", cmd_gen_gabor, "colored Gabor patches; writes train.csv and test.csv to --out DIR")
    p.add_argument("--config", help="JSON object of Gabor generator fields")
    p.add_argument("--image-size", type=int)
    p.add_argument("--n-train-per-class", type=int)
    p.add_argument("--n-test-per-class", type=int)
    p = leaf(gen, "noise", cmd_gen_noise, "i.i.d. standard normal images with placeholder label 0")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--num-classes", type=int, default=10)
    p = leaf(gen, "shuffle-labels", cmd_gen_shuffle_labels, "redraw every label uniformly")
    p.add_argument("--input", required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p = leaf(gen, "partition", cmd_gen_partition, "split into disjoint parts; writes part<k>.csv to --out DIR")
    p.add_argument("--input", required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--parts", type=int, required=True)

    # data
    data = groups.add_parser("data", help="load and normalize datasets").add_subparsers(
        dest="cmd", metavar="CMD", required=True)
    p = leaf(data, "load-idx", cmd_data_load_idx, "convert an IDX image/label pair to feature CSV")
    p.add_argument("--images", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p = leaf(data, "load-csv", cmd_data_load_csv, "validate a feature CSV (label then features per row)")
    p.add_argument("--input", required=True)
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p = leaf(data, "normalize", cmd_data_normalize,
             "standardize every feature with training-set statistics; writes files of the same names to --out DIR")
    p.add_argument("--train", required=True)
    p.add_argument("--others", nargs="*", default=[])
    p.add_argument("--num-classes", type=int, required=True)

    # train
    train = groups.add_parser("train", help="train ensembles and record prediction logs").add_subparsers(
        dest="cmd", metavar="CMD", required=True)
    p = leaf(train, "mlp", cmd_train_mlp, "MLP ensemble; writes <stem>.plog per set to --out DIR")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", nargs="*", default=[])
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--n-models", type=int, default=10)
    p.add_argument("--config", help="JSON object of MLP config fields")
    p.add_argument("--hidden", type=_schedule, help="comma-separated hidden widths (empty for softmax regression)")
    p.add_argument("--activation", choices=["relu", "identity", "tanh"])
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=_schedule, help="comma-separated epoch schedule")
    p.add_argument("--dropout", type=float)
    p.add_argument("--retrain-per-extent", action="store_true")
    p = leaf(train, "adaboost", cmd_train_adaboost, "SAMME boosting; writes <stem>.plog per set to --out DIR")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", nargs="*", default=[])
    p.add_argument("--num-classes", type=int, required=True)
    p.add_argument("--n-models", type=int, default=1)
    p.add_argument("--config", help="JSON object of boosting config fields")
    p.add_argument("--num-weak", type=int)
    p.add_argument("--weak-epochs", type=int)
    p.add_argument("--weak-lr", type=float)
    p.add_argument("--snapshots", type=_schedule, help="comma-separated weak-learner counts")

    # analyze
    an = groups.add_parser("analyze", help="per-example statistics of a log").add_subparsers(
        dest="cmd", metavar="CMD", required=True)

    def log_args(p, data=True, extent=False):
        p.add_argument("--log", required=True, help="prediction log (.plog, or .csv with --manifest)")
        p.add_argument("--manifest", help="JSON manifest for a CSV log")
        if data:
            p.add_argument("--data", required=True, help="feature CSV holding the true labels")
        if extent:
            p.add_argument("--extent", type=int, help="extent index (default: last)")

    log_args(leaf(an, "tpa", cmd_analyze_tpa, "TP-agreement per example at one extent"), extent=True)
    log_args(leaf(an, "agreement", cmd_analyze_agreement, "agreement per example at one extent"),
             data=False, extent=True)
    log_args(leaf(an, "accessibility", cmd_analyze_accessibility, "mean TP-agreement over extents"))
    p = leaf(an, "bimodality", cmd_analyze_bimodality, "bimodality score per extent, or of a score CSV")
    p.add_argument("--log")
    p.add_argument("--manifest", help="JSON manifest for a CSV log")
    p.add_argument("--data")
    p.add_argument("--scores")
    p.add_argument("--kind", choices=["tpa", "agreement"], default="tpa")
    p = leaf(an, "condensed", cmd_analyze_condensed, "histogram of scores per extent")
    p.add_argument("--log", required=True)
    p.add_argument("--manifest", help="JSON manifest for a CSV log")
    p.add_argument("--data")
    p.add_argument("--kind", choices=["tpa", "agreement"], default="tpa")
    p.add_argument("--bins", type=int, default=50)
    p = leaf(an, "learned-epoch", cmd_analyze_learned_epoch,
             "learned-epoch boxes by accessibility, or one model's learned extent indices")
    log_args(p)
    p.add_argument("--model", type=int)
    p.add_argument("--bin-fraction", type=float, default=0.05)
    log_args(leaf(an, "modal", cmd_analyze_modal, "plurality label per example"), data=False, extent=True)
    p = leaf(an, "trajectory", cmd_analyze_trajectory, "TP-agreement of one example over extents")
    log_args(p)
    p.add_argument("--example", type=int, required=True)

    # null
    p = leaf(groups, "null", cmd_null, "matched-accuracy null log; writes a .plog to --out FILE")
    log_args(p)

    # compare
    cmp_ = groups.add_parser("compare", help="compare two collections").add_subparsers(
        dest="cmd", metavar="CMD", required=True)

    def pair_args(p, tolerance=True):
        p.add_argument("--log-a", required=True)
        p.add_argument("--log-b", required=True)
        p.add_argument("--manifest-a")
        p.add_argument("--manifest-b")
        p.add_argument("--data", required=True)
        if tolerance:
            p.add_argument("--tolerance", type=float, default=0.01)

    pair_args(leaf(cmp_, "match", cmd_compare_match, "pair extents by majority-vote accuracy"))
    pair_args(leaf(cmp_, "overlap", cmd_compare_overlap, "correct-example overlap for matched extents"))
    p = leaf(cmp_, "correlate", cmd_compare_correlate, "Pearson correlation of accessibility scores")
    p.add_argument("--log-a", required=True)
    p.add_argument("--log-b", required=True)
    p.add_argument("--manifest-a")
    p.add_argument("--manifest-b")
    p.add_argument("--data-a", required=True)
    p.add_argument("--data-b", help="labels for --log-b (default: --data-a)")
    p = leaf(cmp_, "binned", cmd_compare_binned, "mean of --y scores within equal-width bins of --x")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--bins", type=int, default=10)
    p = leaf(cmp_, "report", cmd_compare_report,
             "report.json, pairs.csv, correlation.csv and bins.csv in --out DIR")
    pair_args(p)
    p.add_argument("--bins", type=int, default=10)

    # exp
    exp = groups.add_parser("exp", help="run an experiment recipe into --out DIR").add_subparsers(
        dest="cmd", metavar="RECIPE", required=True)
    for recipe in experiments.RECIPES:
        p = leaf(exp, recipe, cmd_exp, f"run the {recipe} recipe")
        p.add_argument("--config", help="experiment JSON file")
        p.set_defaults(recipe=recipe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs == 0 or args.jobs < -1:
        parser.error("--jobs must be a positive integer or -1")
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ValueError, RuntimeError, OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"learnorder: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
