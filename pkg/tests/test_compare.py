import csv
import json
import math

import mpmath
import numpy as np
import pytest

from learnorder import compare, nullmodel
from learnorder.compare import MatchedPair
from learnorder.metrics import majority_vote
from learnorder.predlog import Manifest, log_from_tensor

import oracles
from oracles import random_log

M = 1000


def accuracy_log(accs, M=M, N=3, seed=0):
    """Every model predicts label 0 on a fixed random subset of size acc*M, 1 elsewhere."""
    rng = np.random.default_rng(seed)
    preds = np.ones((len(accs), N, M), dtype=int)
    for e, a in enumerate(accs):
        preds[e, :, rng.permutation(M)[:round(a * M)]] = 0
    m = Manifest(dataset_id="acc", split="test", num_classes=2, num_examples=M, num_models=N,
                 epoch_schedule=tuple(range(1, len(accs) + 1)), learner_tag="t", seed=seed)
    return log_from_tensor(m, preds)


LABELS = np.zeros(M, dtype=int)


def test_identical_logs_pair_diagonally():
    log = accuracy_log([0.2, 0.5, 0.7, 0.95])
    res = compare.match_epochs(log, LABELS, log)
    assert [(p.extent_a, p.extent_b, p.kind) for p in res.pairs] == [(i, i, "matched") for i in range(4)]
    assert res.unmatched_b == []
    ov = compare.overlap_counts(log, log, LABELS, res)
    assert [(o.only_a, o.only_b) for o in ov] == [(0, 0)] * 4
    assert [o.both for o in ov] == [200, 500, 700, 950]


def test_match_rule_trace():
    a = accuracy_log([0.305, 0.52, 0.9], seed=1)
    b = accuracy_log([0.3, 0.5], seed=2)
    res = compare.match_epochs(a, LABELS, b)
    got = [(p.extent_a, p.extent_b, p.kind) for p in res.pairs]
    # 0.3 is within 0.01 of 0.305; 0.5 has no partner; 0.52 and 0.9 beat B's best
    assert got == [(0, 0, "matched"), (1, 1, "converged"), (2, 1, "converged")]
    assert res.unmatched_b == []
    assert res.pairs[0] == MatchedPair(0, 0, 0.305, 0.3, "matched")


def test_unmatched_b_extents_are_reported():
    a = accuracy_log([0.305, 0.52, 0.9], seed=1)
    b = accuracy_log([0.3, 0.45, 0.5], seed=2)
    res = compare.match_epochs(a, LABELS, b)
    assert res.unmatched_b == [1]


def test_match_ties_go_to_earlier_extent():
    a = accuracy_log([0.49, 0.51], seed=3)
    b = accuracy_log([0.5], seed=4)
    (pair, *rest) = compare.match_epochs(a, LABELS, b).pairs
    assert (pair.extent_a, pair.kind) == (0, "matched")


def test_overlap_matches_set_oracle():
    rng = np.random.default_rng(5)
    a, labels = random_log(rng, 3, 5, 200, 4, bias=0.5)
    b, _ = random_log(rng, 2, 5, 200, 4, bias=0.5, labels=labels)
    pairs = [MatchedPair(i, j, 0, 0, "matched") for i in range(3) for j in range(2)]
    for p, o in zip(pairs, compare.overlap_counts(a, b, labels, pairs)):
        sa = {j for j, v in enumerate(majority_vote(a, p.extent_a)) if v == labels[j]}
        sb = {j for j, v in enumerate(majority_vote(b, p.extent_b)) if v == labels[j]}
        assert (o.both, o.only_a, o.only_b) == (len(sa & sb), len(sa - sb), len(sb - sa))
        ora = oracles.overlap(oracles.modal(oracles.as_lists(a), p.extent_a),
                              oracles.modal(oracles.as_lists(b), p.extent_b), labels.tolist())
        assert (o.both, o.only_a, o.only_b) == tuple(ora)


def test_eval_set_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        compare.match_epochs(accuracy_log([0.5]), LABELS, accuracy_log([0.5], M=10))


# ----------------------------------------------------------------- correlation

def mp_pearson(x, y):
    with mpmath.workdps(60):
        x = [mpmath.mpf(float(v)) for v in x]
        y = [mpmath.mpf(float(v)) for v in y]
        n = len(x)
        mx, my = sum(x) / n, sum(y) / n
        sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
        sxx = sum((a - mx) ** 2 for a in x)
        syy = sum((b - my) ** 2 for b in y)
        r = sxy / mpmath.sqrt(sxx * syy)
        df = n - 2
        # two-sided p = I_{1-r^2}(df/2, 1/2)
        p = mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, 1 - r * r, regularized=True)
        return float(r), float(mpmath.log10(p))


def test_pearson_extremes():
    x = np.arange(10.0)
    assert compare.pearson(x, x) == (1.0, -math.inf)
    assert compare.pearson(x, -x) == (-1.0, -math.inf)


def test_pearson_against_mpmath():
    x = np.array([0.1, 0.4, 0.35, 0.8, 0.55, 0.2, 0.95, 0.6, 0.05, 0.7])
    y = np.array([0.3, 0.2, 0.5, 0.9, 0.4, 0.1, 0.7, 0.8, 0.2, 0.5])
    r, lp = compare.pearson(x, y)
    mr, mlp = mp_pearson(x, y)
    assert r == pytest.approx(mr, abs=1e-12)
    assert lp == pytest.approx(mlp, rel=1e-9)


@pytest.mark.parametrize("n, noise", [(1000, 0.3), (5000, 0.1), (200, 0.02)])
def test_pearson_deep_tail_against_mpmath(n, noise):
    rng = np.random.default_rng(n)
    x = rng.random(n)
    y = x + noise * rng.standard_normal(n)
    r, lp = compare.pearson(x, y)
    mr, mlp = mp_pearson(x, y)
    assert r == pytest.approx(mr, abs=1e-12)
    assert lp == pytest.approx(mlp, rel=1e-6)
    assert lp < -30


def test_pearson_affine_invariance():
    rng = np.random.default_rng(0)
    x, y = rng.random(50), rng.random(50)
    r, lp = compare.pearson(x, y)
    r2, lp2 = compare.pearson(3 * x + 7, 0.5 * y - 2)
    assert r2 == pytest.approx(r, abs=1e-12) and lp2 == pytest.approx(lp, abs=1e-9)
    assert compare.pearson(-2 * x, y)[0] == pytest.approx(-r, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(ValueError, match="constant"):
        compare.pearson([1, 1, 1, 1], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        compare.pearson([1, 2], [1, 2])
    with pytest.raises(ValueError):
        compare.pearson([1, 2, 3], [1, 2])


def test_t_tail_continuity_at_switch():
    df = 998
    below = compare.t_log10_sf(compare.T_TAIL_SWITCH - 1e-9, df)
    above = compare.t_log10_sf(compare.T_TAIL_SWITCH + 1e-9, df)
    assert above == pytest.approx(below, rel=1e-8)


def test_self_and_null_correlation():
    rng = np.random.default_rng(8)
    Mx = 2000
    log, labels = random_log(rng, 4, 10, Mx, 5, bias=0.6)
    # give examples lasting differences in difficulty
    t = log.tensor().copy()
    easy = rng.random(Mx) < 0.5
    t[:, :, easy] = labels[easy]
    log = log_from_tensor(log.manifest, t)
    r, _ = compare.correlate_accessibility(log, labels, log, labels)
    assert r == pytest.approx(1.0)
    null = nullmodel.null_from(log, labels, 3)
    r_null, _ = compare.correlate_accessibility(log, labels, null, labels)
    assert abs(r_null) < 3 / math.sqrt(Mx)


# ----------------------------------------------------------------- binning

def test_binned_against_naive_oracle():
    rng = np.random.default_rng(2)
    for n, n_bins in [(200, 10), (37, 4), (500, 7)]:
        x, y = rng.random(n), rng.random(n)
        got = compare.binned_comparison(x, y, n_bins)
        want = oracles.binned(x.tolist(), y.tolist(), n_bins)
        assert len(got) == n_bins
        for g, (count, mean, se) in zip(got, want):
            assert g.count == count
            if count:
                assert g.mean == pytest.approx(mean, abs=1e-12)
                assert g.stderr == pytest.approx(se, abs=1e-12)


def test_binned_edge_cases():
    x = np.array([0.0, 0.05, 1.0, 1.0])
    y = np.array([1.0, 3.0, 5.0, 7.0])
    bins = compare.binned_comparison(x, y, 4)
    assert bins[0].count == 2 and bins[0].mean == 2.0
    assert bins[1].count == 0 and bins[1].mean is None and bins[1].stderr is None
    assert bins[3].count == 2 and bins[3].mean == 6.0
    single = compare.binned_comparison(np.array([0.0, 0.5, 1.0]), np.array([1.0, 2.0, 3.0]), 3)
    assert single[1].count == 1 and single[1].stderr == 0.0
    with pytest.raises(ValueError, match="degenerate"):
        compare.binned_comparison(np.ones(5), np.arange(5.0), 3)
    with pytest.raises(ValueError):
        compare.binned_comparison(x, y, 1)


def test_report_write(tmp_path):
    a = accuracy_log([0.305, 0.52, 0.9], seed=1)
    b = accuracy_log([0.3, 0.5], seed=2)
    rep = compare.compare_collections(a, b, LABELS, n_bins=5)
    rep.write(tmp_path)
    data = json.loads((tmp_path / "report.json").read_text())
    assert len(data["matched_pairs"]) == 3 and len(data["binned"]) == len(rep.binned)
    with open(tmp_path / "pairs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["both"]) + int(r["only_a"]) for r in rows] == [305, 520, 900]
    assert (tmp_path / "correlation.csv").exists() and (tmp_path / "bins.csv").exists()
