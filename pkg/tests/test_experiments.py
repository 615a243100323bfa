import csv
import json

import numpy as np
import pytest

from learnorder import datasets, experiments
from learnorder.datasets import LabeledDataset
from learnorder.learners import BoostConfig, MlpConfig

TINY = MlpConfig(layer_widths=(8,), epoch_schedule=(0, 1, 3), batch_size=20)


def blobs(n, split, seed=0, K=3, d=6):
    rng = np.random.default_rng(seed)
    centers = np.random.default_rng(99).normal(0, 2, (K, d))
    y = rng.integers(0, K, n)
    return LabeledDataset(centers[y] + rng.normal(size=(n, d)), y, K, split, f"blobs-{split}")


TRAIN, TEST = blobs(120, "train", 0), blobs(60, "test", 1)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_structured_bundle_layout(tmp_path):
    bundle = experiments.run_structured(TRAIN, TEST, TINY, n_models=4, seed=3, bins=10, bin_fraction=0.25)
    out = bundle.write(tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["recipe"] == "structured" and manifest["seed"] == 3
    assert set(manifest["logs"]) == {"train", "train_null", "test", "test_null"}
    for entry in manifest["logs"].values():
        assert (out / entry["path"]).exists()
    for rel in manifest["metrics"]:
        assert (out / rel).exists()
    ext = read_csv(out / "metrics" / "test_extents.csv")
    assert ext[0] == experiments.EXTENT_COLUMNS and len(ext) == 1 + 3
    hist = read_csv(out / "metrics" / "test_condensed_tpa.csv")
    assert len(hist) - 1 == 3 * 10 and {int(r[0]) for r in hist[1:]} == {0, 1, 3}
    boxes = read_csv(out / "metrics" / "train_learned_epoch_boxes.csv")
    assert len(boxes) - 1 == 4
    report = json.loads((out / "report.json").read_text())
    test = report["collections"]["test"]
    assert len(test["bimodality"]) == 3 and "disjoint_halves" in test and "min_bimodality" in test


def test_bundle_bytes_are_deterministic(tmp_path):
    a = experiments.run_structured(TRAIN, TEST, TINY, n_models=3, seed=1).write(tmp_path / "a")
    b = experiments.run_structured(TRAIN, TEST, TINY, n_models=3, seed=1, jobs=2).write(tmp_path / "b")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_seed_changes_output():
    a = experiments.run_structured(TRAIN, TEST, TINY, n_models=2, seed=1)
    b = experiments.run_structured(TRAIN, TEST, TINY, n_models=2, seed=2)
    assert not np.array_equal(a.logs["test"].tensor(), b.logs["test"].tensor())


def test_single_partition_is_structured_run():
    s = experiments.run_structured(TRAIN, TEST, TINY, n_models=3, seed=4)
    p = experiments.run_partitions(TRAIN, TEST, 1, TINY, n_models=3, seed=4)
    assert np.array_equal(s.logs["test"].tensor(), p.logs["part0_test"].tensor())
    assert p.report["partition_correlations"] == [] and p.report["partition_sizes"] == [120]


def test_partitions_report():
    p = experiments.run_partitions(TRAIN, TEST, 3, TINY, n_models=2, seed=0)
    assert p.report["partition_sizes"] == [40, 40, 40]
    assert [(c["part_a"], c["part_b"]) for c in p.report["partition_correlations"]] == [(0, 1), (0, 2), (1, 2)]
    rs = [c["r"] for c in p.report["partition_correlations"]]
    # a part whose ensemble gets every test example right has constant accessibility
    assert all(np.isnan(r) or -1 <= r <= 1 for r in rs) and not all(np.isnan(rs))


def test_paradigms_report():
    boost = BoostConfig(num_weak=4, snapshot_schedule=(1, 2, 4), weak_lr=0.05)
    p = experiments.run_paradigms(TRAIN, TEST, TINY, boost, n_models=2, seed=0, n_bins=4)
    assert set(p.report["correlations"]) == {"mlp_vs_mlp_train", "mlp_vs_mlp_test", "mlp_vs_boost_train",
                                             "mlp_vs_boost_test"}
    assert p.logs["boost_test"].manifest.epoch_schedule == (1, 2, 4)
    assert set(p.report["comparisons"]["mlp_vs_boost_test"]) >= {"matched_pairs", "overlap", "pearson_r"}
    assert "mlp_vs_mlp_test_bins" in p.metrics


def test_out_of_sample_agreements():
    b = experiments.run_out_of_sample(TRAIN, TEST, TINY, n_models=4, seed=0, noise_count=50)
    ma = b.report["mean_agreement"]
    for v in ma.values():
        assert 1 / 3 - 1e-12 <= v <= 1
    assert b.logs["noise"].manifest.num_examples == 50
    assert b.logs["noise"].manifest.split == "test"


def test_permuted_null_keeps_row_histograms():
    b = experiments.run_structured(TRAIN, TEST, TINY, n_models=3, seed=0)
    log = b.logs["test"]
    perm = experiments.permuted_null(log, 5)
    t, q = log.tensor(), perm.tensor()
    for e in range(3):
        for i in range(3):
            assert np.array_equal(np.sort(t[e, i]), np.sort(q[e, i]))


def test_random_labels_recipe():
    b = experiments.run_random_labels(TRAIN, TEST, TINY, n_models=2, seed=0, n_examples=50)
    assert b.logs["train"].manifest.num_examples == 50 and b.config["n_examples"] == 50
    assert b.recipe == "random-labels"


def test_gaussian_recipe_overrides():
    b = experiments.run_gaussian({"dim": 8, "n_train_per_class": 30, "n_test_per_class": 10}, TINY, 2, seed=0)
    assert b.logs["train"].manifest.num_examples == 60 and b.config["gaussian"]["dim"] == 8
    with pytest.raises(ValueError, match="unknown"):
        experiments.run_gaussian({"dims": 8}, TINY, 2)


def _idx_files(tmp_path):
    rng = np.random.default_rng(0)
    for split, n in (("train", 60), ("test", 20)):
        datasets.write_idx(rng.integers(0, 256, (n, 3, 3)), rng.integers(0, 3, n),
                           tmp_path / f"{split}-img", tmp_path / f"{split}-lab")


def test_run_experiment_from_json(tmp_path):
    _idx_files(tmp_path)
    cfg = {"recipe": "structured", "seed": 2, "n_models": 2,
           "mlp": {"layer_widths": [4], "epoch_schedule": [1, 2]},
           "dataset": {"format": "idx", "num_classes": 3, "train_images": "train-img", "train_labels": "train-lab",
                       "test_images": "test-img", "test_labels": "test-lab", "train_limit": 40}}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    b = experiments.run_experiment(experiments.load_experiment(path))
    assert b.seed == 2 and b.logs["train"].manifest.num_examples == 40
    assert experiments.run_experiment(experiments.load_experiment(path), seed=7).seed == 7


def test_run_experiment_csv_dataset(tmp_path):
    datasets.export_features_csv(TRAIN, tmp_path / "tr.csv")
    datasets.export_features_csv(TEST, tmp_path / "te.csv")
    cfg = {"recipe": "oos", "n_models": 2, "noise_count": 10, "mlp": {"layer_widths": [4], "epoch_schedule": [1]},
           "dataset": {"format": "csv", "num_classes": 3, "train": "tr.csv", "test": "te.csv", "normalize": True},
           "_base_dir": str(tmp_path)}
    b = experiments.run_experiment(cfg)
    assert b.recipe == "oos" and "noise" in b.logs


@pytest.mark.parametrize("cfg, match", [
    ({"recipe": "structured", "bogus": 1}, "unknown"),
    ({"recipe": "nope"}, "recipe"),
    ({"recipe": "structured"}, "dataset"),
    ({"recipe": "structured", "dataset": {"format": "idx", "colour": 1}}, "unknown"),
    ({"recipe": "structured", "dataset": {"format": "npz"}}, "format"),
    ({"recipe": "structured", "mlp": {"depth": 3}, "dataset": {}}, "unknown"),
])
def test_run_experiment_errors(cfg, match):
    with pytest.raises(ValueError, match=match):
        experiments.run_experiment(cfg)
