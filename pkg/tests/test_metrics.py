import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from learnorder import metrics
from learnorder.metrics import DegenerateDistributionError
from learnorder.predlog import Manifest, log_from_tensor

import oracles
from oracles import random_log


def make_log(preds, K=10, schedule=None):
    preds = np.asarray(preds)
    E, N, M = preds.shape
    m = Manifest(dataset_id="t", split="test", num_classes=K, num_examples=M, num_models=N,
                 epoch_schedule=tuple(schedule or range(1, E + 1)), learner_tag="t", seed=0)
    return log_from_tensor(m, preds)


def test_tp_agreement_small_cases():
    assert metrics.tp_agreement(make_log([[[3]]]), [3], 0).values.tolist() == [1.0]
    log = make_log([[[1], [1], [1], [0]]])
    assert metrics.tp_agreement(log, [1], 0).values.tolist() == [0.75]


def test_agreement_small_cases():
    assert metrics.agreement(make_log([[[3], [3], [3]]]), 0).values.tolist() == [1.0]
    assert metrics.agreement(make_log([[[0], [1], [2], [3]]]), 0).values.tolist() == [0.25]


def test_accessibility_small_cases():
    log = make_log([[[0, 1]], [[1, 1]], [[1, 1]]])
    # example 0: TPa sequence (0, 1, 1); example 1: always correct
    assert metrics.accessibility(log, [1, 1]).values.tolist() == pytest.approx([2 / 3, 1.0])
    half = make_log([[[0], [0]], [[1], [0]], [[1], [1]]], K=2)
    assert metrics.accessibility(half, [1]).values[0] == pytest.approx(0.5)


@pytest.mark.parametrize("seq, expected", [((0, 1, 1, 1), 1), ((1, 1, 0, 1), 3), ((1, 1, 1, 0), 4),
                                           ((1, 1, 1, 1), 0), ((0, 0, 0, 0), 4)])
def test_learned_epoch_traces(seq, expected):
    log = make_log([[[s]] for s in seq], K=2)
    assert metrics.learned_epoch(log, [1], 0).tolist() == [expected]


def test_bimodality_two_point_and_bernoulli():
    assert abs(metrics.bimodality([0, 1] * 50)) < 1e-9
    v = [1] * 9 + [0]
    assert abs(metrics.bimodality(v)) < 1e-9
    # Bernoulli(0.9) raw kurtosis and squared skewness from closed forms
    p, q = 0.9, 0.1
    kurt = (1 - 6 * p * q) / (p * q) + 3
    skew2 = (1 - 2 * p) ** 2 / (p * q)
    assert kurt == pytest.approx(8.1111111, abs=1e-6) and skew2 == pytest.approx(7.1111111, abs=1e-6)
    assert kurt - skew2 - 1 == pytest.approx(0, abs=1e-12)


def test_bimodality_normal_sample():
    x = np.random.default_rng(0).standard_normal(1_000_000)
    c = x - x.mean()
    m2, m3, m4 = (c**2).mean(), (c**3).mean(), (c**4).mean()
    direct = m4 / m2**2 - m3**2 / m2**3 - 1
    assert metrics.bimodality(x) == pytest.approx(direct, rel=1e-12)
    assert abs(metrics.bimodality(x) - 2.0) < 0.02


def test_bimodality_matches_exact_rational_moments():
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = rng.integers(0, 7, size=rng.integers(3, 40)) / 6
        if np.ptp(v) == 0:
            continue
        assert metrics.bimodality(v) == pytest.approx(oracles.bimodality(v.tolist()), abs=1e-12)


def test_bimodality_degenerate():
    with pytest.raises(DegenerateDistributionError):
        metrics.bimodality([0.5, 0.5, 0.5])
    with pytest.raises(DegenerateDistributionError):
        metrics.bimodality([1.0])
    assert math.isnan(metrics.bimodality_or_nan([2, 2]))


def test_modal_label_and_vote():
    assert metrics.modal_label(make_log([[[4], [4], [4]]]), 0).tolist() == [4]
    tie = make_log([[[3], [1], [3], [1]]])
    assert metrics.modal_label(tie, 0).tolist() == [1]
    assert metrics.majority_vote(tie, 0).tolist() == [1]


def test_condensed_rows_and_top_bin():
    log = make_log([[[2, 2, 2]], [[2, 2, 2]]], K=3)
    h = metrics.condensed(log, [2, 2, 2], bins=10)
    assert h.counts.sum(axis=1).tolist() == [3, 3]
    assert h.counts[:, -1].tolist() == [3, 3]
    assert len(h.bin_edges) == 11 and h.bin_edges[0] == 0 and h.bin_edges[-1] == 1
    with pytest.raises(ValueError):
        metrics.condensed(log, [2, 2, 2], bins=1)


def test_trajectory():
    log = make_log([[[1, 0], [1, 1]], [[1, 0], [1, 0]]], K=2)
    assert metrics.trajectory(log, [1, 1], 0).tolist() == [1.0, 1.0]
    assert metrics.trajectory(log, [1, 1], 1).tolist() == [0.5, 0.0]
    table = metrics.tp_agreement_table(log, [1, 1])
    assert np.array_equal(metrics.trajectory(log, [1, 1], 1), table[:, 1])
    with pytest.raises(IndexError):
        metrics.trajectory(log, [1, 1], 2)


def test_against_oracles_on_random_logs():
    rng = np.random.default_rng(7)
    for _ in range(5):
        E, N, M = (int(v) for v in rng.integers(1, 6, size=3))
        K = int(rng.integers(2, 6))
        log, labels = random_log(rng, E, N, M, K, bias=0.5)
        preds, y = oracles.as_lists(log), labels.tolist()
        for e in range(E):
            assert metrics.tp_agreement(log, labels, e).values.tolist() == [float(f) for f in oracles.tpa(preds, y, e)]
            assert metrics.agreement(log, e).values.tolist() == [float(f) for f in oracles.agreement(preds, e)]
            assert metrics.modal_label(log, e).tolist() == oracles.modal(preds, e)
        acc = metrics.accessibility(log, labels).values
        assert np.allclose(acc, [float(f) for f in oracles.accessibility(preds, y)], atol=1e-12, rtol=0)
        for i in range(N):
            assert metrics.learned_epoch(log, labels, i).tolist() == oracles.learned_epoch(preds, y, i)
        for bins in (2, 3, 7, 50):
            h = metrics.condensed(log, labels, bins)
            for e in range(E):
                assert h.counts[e].tolist() == oracles.histogram(oracles.tpa(preds, y, e), bins)
            ha = metrics.condensed_agreement(log, bins)
            for e in range(E):
                assert ha.counts[e].tolist() == oracles.histogram(oracles.agreement(preds, e), bins)


def test_learned_epoch_boxes_all_learned_at_first_extent():
    log = make_log(np.ones((3, 4, 40), dtype=int), K=2, schedule=(1, 2, 5))
    boxes = metrics.learned_epoch_boxes(log, np.ones(40, dtype=int), 0.05)
    assert len(boxes) == 20
    assert all(b.median == 1 and b.count == 2 for b in boxes)


@pytest.mark.parametrize("bf, n", [(0.05, 20), (0.1, 10), (0.3, 4), (1.0, 1)])
def test_learned_epoch_box_count(bf, n):
    rng = np.random.default_rng(0)
    log, labels = random_log(rng, 3, 3, 50, 3)
    assert len(metrics.learned_epoch_boxes(log, labels, bf)) == n


def test_learned_epoch_boxes_ordered_construction():
    # example j is learned at extent index j % E by every model and stays correct
    E, N, M = 5, 4, 100
    learn_at = np.arange(M) % E
    correct = np.arange(E)[:, None] >= learn_at[None, :]
    preds = np.where(correct[:, None, :], 1, 0).repeat(N, axis=1)
    log = make_log(preds, K=2, schedule=(1, 2, 4, 8, 16))
    boxes = metrics.learned_epoch_boxes(log, np.ones(M, dtype=int), 0.1)
    medians = [b.median for b in boxes]
    assert medians == sorted(medians)
    assert medians[0] == 1 and medians[-1] == 16


def test_learned_epoch_boxes_match_oracle():
    rng = np.random.default_rng(11)
    log, labels = random_log(rng, 4, 5, 37, 3, bias=0.6)
    preds, y = oracles.as_lists(log), labels.tolist()
    sched = list(log.manifest.epoch_schedule) + [math.inf]
    per = [statistics.median(sched[oracles.learned_epoch(preds, y, i)[j]] for i in range(5)) for j in range(37)]
    acc = [float(a) for a in oracles.accessibility(preds, y)]
    order = sorted(range(37), key=lambda j: -acc[j])
    boxes = metrics.learned_epoch_boxes(log, labels, 0.25)
    cuts = [0, 9, 18, 27, 37]
    for b, box in enumerate(boxes):
        members = [per[j] for j in order[cuts[b]:cuts[b + 1]]]
        assert box.count == len(members)
        assert box.median == statistics.median(members)


def test_median_interval():
    med, lo, hi = metrics.median_interval([1, 2, 3, 4, 5, 6, 7, 8])
    q1, q3 = np.percentile([1, 2, 3, 4, 5, 6, 7, 8], [25, 75])
    assert med == 4.5
    assert hi - med == pytest.approx(1.57 * (q3 - q1) / math.sqrt(8))
    assert metrics.median_interval([math.inf] * 3)[0] == math.inf


def test_invalid_bin_fraction():
    log, labels = random_log(np.random.default_rng(0), 1, 1, 3, 2)
    for bf in (0, -0.1, 1.5):
        with pytest.raises(ValueError):
            metrics.learned_epoch_boxes(log, labels, bf)


def test_scores_csv_round_trip(tmp_path):
    v = np.array([0.1, 0.25, 1 / 3])
    metrics.write_scores_csv(v, tmp_path / "s.csv")
    assert np.array_equal(metrics.read_scores_csv(tmp_path / "s.csv"), v)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 20), st.integers(2, 6), st.integers(0, 2**32 - 1),
       st.floats(0, 1))
def test_score_invariants(E, N, M, K, seed, bias):
    log, labels = random_log(np.random.default_rng(seed), E, N, M, K, bias=bias)
    for e in range(E):
        t = metrics.tp_agreement(log, labels, e).values
        a = metrics.agreement(log, e).values
        assert np.all(t >= 0) and np.all(a <= 1) and np.all(a >= t - 1e-15)
        assert np.all(a >= 1 / K - 1e-15)
        assert np.array_equal(np.round(t * N), t * N) and np.array_equal(np.round(a * N), a * N)
    table = metrics.tp_agreement_table(log, labels)
    assert np.allclose(metrics.accessibility(log, labels).values, table.mean(axis=0), atol=1e-12)
    h = metrics.condensed(log, labels, 10)
    assert np.all(h.counts.sum(axis=1) == M)
