"""Cross-collection comparisons: accuracy-matched overlap, correlation, binned means."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special, stats

from ._utils import atomic_dir, atomic_write, to_jsonable
from .metrics import accessibility, majority_vote
from .predlog import PredictionLog, _check_labels

# beyond this |t| the t-distribution tail is integrated in log space
T_TAIL_SWITCH = 38.0


@dataclass(frozen=True)
class MatchedPair:
    extent_a: int
    extent_b: int
    accuracy_a: float
    accuracy_b: float
    kind: str  # "matched" (within tolerance) or "converged" (A beyond B's best)


@dataclass(frozen=True)
class Overlap:
    both: int
    only_a: int
    only_b: int


@dataclass(frozen=True)
class BinStat:
    center: float
    low: float
    high: float
    mean: Optional[float]
    stderr: Optional[float]
    count: int


@dataclass
class MatchResult:
    pairs: list
    unmatched_b: list


@dataclass
class ComparisonReport:
    matched_pairs: list = field(default_factory=list)
    overlap: list = field(default_factory=list)
    unmatched_b: list = field(default_factory=list)
    pearson_r: Optional[float] = None
    log10_p: Optional[float] = None
    binned: list = field(default_factory=list)

    def to_dict(self):
        return {
            "matched_pairs": [asdict(p) for p in self.matched_pairs],
            "overlap": [asdict(o) for o in self.overlap],
            "unmatched_b": list(self.unmatched_b),
            "pearson_r": self.pearson_r,
            "log10_p": self.log10_p,
            "binned": [asdict(b) for b in self.binned],
        }

    def write(self, out_dir):
        """Write ``report.json`` plus ``pairs.csv``, ``correlation.csv`` and ``bins.csv``."""
        with atomic_dir(out_dir) as out:
            self._write_files(out)

    def _write_files(self, out):
        with atomic_write(out / "report.json") as fh:
            json.dump(to_jsonable(self.to_dict()), fh, indent=2)
        with atomic_write(out / "pairs.csv", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["extent_a", "extent_b", "accuracy_a", "accuracy_b", "kind", "both", "only_a", "only_b"])
            for k, p in enumerate(self.matched_pairs):
                o = self.overlap[k] if k < len(self.overlap) else Overlap(-1, -1, -1)
                w.writerow([p.extent_a, p.extent_b, p.accuracy_a, p.accuracy_b, p.kind, o.both, o.only_a, o.only_b])
        with atomic_write(out / "correlation.csv", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pearson_r", "log10_p"])
            w.writerow([self.pearson_r, self.log10_p])
        with atomic_write(out / "bins.csv", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_center", "bin_low", "bin_high", "mean", "stderr", "count"])
            for b in self.binned:
                w.writerow([b.center, b.low, b.high, "" if b.mean is None else b.mean,
                            "" if b.stderr is None else b.stderr, b.count])



# --------------------------------------------------------------------------- matching

def ensemble_accuracy(log: PredictionLog, labels) -> np.ndarray:
    """Majority-vote ensemble accuracy at every extent."""
    labels = _check_labels(log, labels)
    return np.array([np.mean(majority_vote(log, e) == labels) for e in range(log.manifest.num_extents)])


def _same_eval_set(log_a, log_b):
    if log_a.manifest.num_examples != log_b.manifest.num_examples:
        raise ValueError(f"eval-set size mismatch: {log_a.manifest.num_examples} vs {log_b.manifest.num_examples}")


def match_epochs(log_a, labels, log_b, tolerance=0.01) -> MatchResult:
    """Pair extents of collection A with extents of the weaker collection B.

    Each B extent is paired with the A extent of closest ensemble accuracy
    if it lies within ``tolerance`` (ties go to the earlier A extent). Every
    A extent more accurate than B's best is paired with B's final extent.
    B extents that end up in no pair are reported in ``unmatched_b``.
    """
    _same_eval_set(log_a, log_b)
    acc_a = ensemble_accuracy(log_a, labels)
    acc_b = ensemble_accuracy(log_b, labels)
    pairs, seen = [], set()
    for jb, ab in enumerate(acc_b):
        diff = np.abs(acc_a - ab)
        ja = int(np.argmin(diff))
        if diff[ja] <= tolerance + 1e-12:
            pairs.append(MatchedPair(ja, jb, float(acc_a[ja]), float(ab), "matched"))
            seen.add((ja, jb))
    final_b = len(acc_b) - 1
    for ja, aa in enumerate(acc_a):
        if aa > acc_b.max() and (ja, final_b) not in seen:
            pairs.append(MatchedPair(ja, final_b, float(aa), float(acc_b[final_b]), "converged"))
            seen.add((ja, final_b))
    used_b = {p.extent_b for p in pairs}
    return MatchResult(pairs, [jb for jb in range(len(acc_b)) if jb not in used_b])


def overlap_counts(log_a, log_b, labels, pairs) -> list[Overlap]:
    """Examples the two majority-vote ensembles get right together or alone."""
    _same_eval_set(log_a, log_b)
    labels = _check_labels(log_a, labels)
    if isinstance(pairs, MatchResult):
        pairs = pairs.pairs
    out = []
    for p in pairs:
        ca = majority_vote(log_a, p.extent_a) == labels
        cb = majority_vote(log_b, p.extent_b) == labels
        out.append(Overlap(int(np.count_nonzero(ca & cb)), int(np.count_nonzero(ca & ~cb)),
                           int(np.count_nonzero(~ca & cb))))
    return out


# --------------------------------------------------------------------------- correlation

def t_log10_sf(t, df) -> float:
    """``log10 P(T > t)`` for Student's t, accurate far into the tail."""
    t = float(t)
    if t <= T_TAIL_SWITCH:
        return float(stats.t.logsf(t, df)) / math.log(10)
    # log density: c - (df+1)/2 * log1p(s^2/df); integrate exp(g(t+u) - g(t)) over u >= 0
    logc = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)

    def g(s):
        return -(df + 1) / 2 * math.log1p(s * s / df)

    g0 = g(t)
    scale = (df + t * t) / ((df + 1) * t)  # 1 / |g'(t)|
    rel, _ = integrate.quad(lambda u: math.exp(g(t + u * scale) - g0), 0, math.inf, epsabs=0, epsrel=1e-10)
    return (logc + g0 + math.log(rel * scale)) / math.log(10)


def pearson(x, y):
    """Sample Pearson correlation with a two-sided p-value reported as log10.

    Returns
    -------
    (r, log10_p) : tuple of float
        ``log10_p`` is ``-inf`` when ``|r| == 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ValueError("constant input: correlation undefined")
    r = float(np.dot(dx, dy) / math.sqrt(sxx * syy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, -math.inf
    df = n - 2
    t = abs(r) * math.sqrt(df / (1 - r * r))
    return r, float(math.log10(2.0) + t_log10_sf(t, df))


def correlate_accessibility(log_a, labels_a, log_b, labels_b):
    """Pearson correlation between the accessibility scores of two collections."""
    if log_a.manifest.num_examples != log_b.manifest.num_examples:
        raise ValueError(f"M mismatch: {log_a.manifest.num_examples} vs {log_b.manifest.num_examples}")
    return pearson(accessibility(log_a, labels_a).values, accessibility(log_b, labels_b).values)


# --------------------------------------------------------------------------- binning

def binned_comparison(x_scores, y_scores, n_bins) -> list[BinStat]:
    """Mean of ``y`` within equal-width bins of ``x``, with standard errors.

    The last bin is right-closed. Standard error is the sample standard
    deviation over ``sqrt(count)``; a single-member bin has stderr 0 and an
    empty bin has no mean.
    """
    x = np.asarray(x_scores, dtype=np.float64)
    y = np.asarray(y_scores, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if n_bins < 2:
        raise ValueError(f"n_bins must be >= 2, got {n_bins}")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise ValueError("degenerate x range")
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    out = []
    for b in range(n_bins):
        members = y[idx == b]
        center = float((edges[b] + edges[b + 1]) / 2)
        if members.size == 0:
            out.append(BinStat(center, float(edges[b]), float(edges[b + 1]), None, None, 0))
            continue
        se = 0.0 if members.size == 1 else float(members.std(ddof=1) / math.sqrt(members.size))
        out.append(BinStat(center, float(edges[b]), float(edges[b + 1]), float(members.mean()), se,
                           int(members.size)))
    return out


def compare_collections(log_a, log_b, labels, tolerance=0.01, n_bins=10) -> ComparisonReport:
    """Full report for two collections evaluated on the same labeled set."""
    match = match_epochs(log_a, labels, log_b, tolerance)
    try:
        r, lp = correlate_accessibility(log_a, labels, log_b, labels)
    except ValueError:  # constant accessibility
        r, lp = None, None
    acc_a = accessibility(log_a, labels).values
    acc_b = accessibility(log_b, labels).values
    try:
        bins = binned_comparison(acc_b, acc_a, n_bins)
    except ValueError:
        bins = []
    return ComparisonReport(match.pairs, overlap_counts(log_a, log_b, labels, match.pairs),
                            match.unmatched_b, r, lp, bins)
