"""Multi-class AdaBoost (SAMME) over softmax-regression weak learners."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._utils import substream_seed
from .mlp import MLPClassifier

EPSILON_FLOOR = 1e-10


def samme_alpha(error, n_classes):
    """Round weight ``ln((1 - err) / err) + ln(K - 1)``, with ``err`` floored at 1e-10."""
    error = max(float(error), EPSILON_FLOOR)
    return math.log((1.0 - error) / error) + math.log(n_classes - 1)


class SAMMEClassifier(ClassifierMixin, BaseEstimator):
    """SAMME boosting with linear weak learners fit by weighted SGD.

    Each round fits a softmax regression on the sample-weighted
    cross-entropy (weights rescaled to mean 1) for ``weak_epochs`` epochs.
    A round whose weighted error reaches ``(K - 1) / K`` is discarded and
    refit with a fresh seed, up to ``max_retries`` times; after that,
    boosting stops with the rounds collected so far.
    """

    def __init__(self, n_estimators=100, weak_epochs=1, weak_lr=0.01, weak_batch_size=100,
                 max_retries=5, random_state=0):
        self.n_estimators = n_estimators
        self.weak_epochs = weak_epochs
        self.weak_lr = weak_lr
        self.weak_batch_size = weak_batch_size
        self.max_retries = max_retries
        self.random_state = random_state

    def _weak(self, round_index, attempt):
        return MLPClassifier(hidden_layer_sizes=(), activation="identity",
                             learning_rate=self.weak_lr, batch_size=self.weak_batch_size,
                             n_epochs=self.weak_epochs,
                             random_state=substream_seed(self.random_state, round_index, attempt))

    def fit(self, X, y, classes=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y) if classes is None else np.asarray(classes)
        K = len(self.classes_)
        if K < 2:
            raise ValueError("need at least two classes")
        M = X.shape[0]
        w = np.full(M, 1.0 / M)
        self.estimators_, self.estimator_weights_, self.estimator_errors_ = [], [], []
        self.weight_sums_ = []
        self.stopped_early_ = False
        threshold = (K - 1) / K
        for t in range(self.n_estimators):
            for attempt in range(self.max_retries + 1):
                weak = self._weak(t, attempt).fit(X, y, sample_weight=w * M, classes=self.classes_)
                miss = weak.predict(X) != y
                err = float(w[miss].sum())
                if err < threshold:
                    break
            else:
                self.stopped_early_ = True
                break
            alpha = samme_alpha(err, K)
            w = w * np.exp(alpha * miss)
            w /= w.sum()
            self.estimators_.append(weak)
            self.estimator_weights_.append(alpha)
            self.estimator_errors_.append(err)
            self.weight_sums_.append((float(w.sum()), float(w.min())))
        self.sample_weight_ = w
        return self

    @property
    def n_rounds_(self):
        return len(self.estimators_)

    def staged_decision_function(self, X):
        """Accumulated weighted votes after each round, shape ``(M, K)`` per stage."""
        check_is_fitted(self, "estimators_")
        X = check_array(X)
        votes = np.zeros((X.shape[0], len(self.classes_)))
        rows = np.arange(X.shape[0])
        for est, alpha in zip(self.estimators_, self.estimator_weights_):
            votes[rows, np.searchsorted(self.classes_, est.predict(X))] += alpha
            yield votes.copy()

    def staged_predict(self, X):
        for votes in self.staged_decision_function(X):
            yield self.classes_[np.argmax(votes, axis=1)]

    def decision_function(self, X):
        out = None
        for out in self.staged_decision_function(X):
            pass
        if out is None:
            raise ValueError("no boosting rounds were accepted")
        return out

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
