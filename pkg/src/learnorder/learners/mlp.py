"""Fully connected softmax network trained with plain mini-batch SGD (numpy)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class TrainingDivergedError(FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, model_index=None):
        super().__init__(message)
        self.model_index = model_index


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name, z):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return None  # identity


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class MLPClassifier(ClassifierMixin, BaseEstimator):
    """Multi-layer perceptron with softmax cross-entropy and SGD.

    Weights use Xavier-uniform initialization, biases start at zero.
    ``hidden_layer_sizes=()`` gives multinomial logistic regression.
    Each :meth:`partial_fit` call runs exactly one epoch over shuffled
    mini-batches, so training can be paused at any epoch to log predictions.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    activation : {"relu", "identity", "tanh"}
    learning_rate : float
    lr_decay_factor : float
        Learning rate is divided by this every ``decay_every`` epochs.
    decay_every : int
        0 disables decay.
    batch_size : int
    n_epochs : int
        Epochs run by :meth:`fit`.
    dropout_rate : float
        Inverted dropout on hidden activations during training.
    random_state : int or None
        Seeds initialization, batch order and dropout masks.
    """

    def __init__(self, hidden_layer_sizes=(100,), activation="relu", learning_rate=0.04,
                 lr_decay_factor=1.0, decay_every=0, batch_size=100, n_epochs=10,
                 dropout_rate=0.0, random_state=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.lr_decay_factor = lr_decay_factor
        self.decay_every = decay_every
        self.batch_size = batch_size
        self.n_epochs = n_epochs
        self.dropout_rate = dropout_rate
        self.random_state = random_state

    # ------------------------------------------------------------------ setup

    def initialize(self, n_features, classes):
        """Draw initial weights without training (the epoch-0 network)."""
        self.classes_ = np.asarray(classes)
        self.n_features_in_ = int(n_features)
        self._rng = np.random.default_rng(self.random_state)
        sizes = [self.n_features_in_, *self.hidden_layer_sizes, len(self.classes_)]
        self.coefs_, self.intercepts_ = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.coefs_.append(self._rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.intercepts_.append(np.zeros(fan_out))
        self.epochs_done_ = 0
        self.loss_curve_ = []
        return self

    def _encode(self, y):
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if not np.all(self.classes_[idx] == y):
            raise ValueError("y contains labels not present in classes")
        return idx

    def current_learning_rate(self):
        if not self.decay_every:
            return self.learning_rate
        return self.learning_rate / self.lr_decay_factor ** (self.epochs_done_ // self.decay_every)

    # ------------------------------------------------------------------ core math

    def _forward(self, X, dropout_rng=None):
        acts, pre, masks = [X], [], []
        a = X
        last = len(self.coefs_) - 1
        for l, (W, b) in enumerate(zip(self.coefs_, self.intercepts_)):
            z = a @ W + b
            pre.append(z)
            if l == last:
                return z, acts, pre, masks
            a = _activate(self.activation, z)
            if dropout_rng is not None and self.dropout_rate > 0:
                keep = 1.0 - self.dropout_rate
                mask = (dropout_rng.random(a.shape) < keep) / keep
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
            acts.append(a)

    def _backward(self, logits, acts, pre, masks, y_idx, weights):
        B = logits.shape[0]
        logp = _log_softmax(logits)
        w = np.ones(B) if weights is None else weights
        loss = -np.sum(w * logp[np.arange(B), y_idx]) / B
        delta = np.exp(logp)
        delta[np.arange(B), y_idx] -= 1.0
        delta *= (w / B)[:, None]
        grads_W, grads_b = [None] * len(self.coefs_), [None] * len(self.coefs_)
        for l in range(len(self.coefs_) - 1, -1, -1):
            grads_W[l] = acts[l].T @ delta
            grads_b[l] = delta.sum(axis=0)
            if l == 0:
                break
            delta = delta @ self.coefs_[l].T
            if masks[l - 1] is not None:
                delta *= masks[l - 1]
            g = _activation_grad(self.activation, pre[l - 1])
            if g is not None:
                delta *= g
        return loss, grads_W, grads_b

    def loss_and_gradients(self, X, y, sample_weight=None):
        """Mean (weighted) cross-entropy and its gradients, without dropout."""
        check_is_fitted(self, "coefs_")
        logits, acts, pre, masks = self._forward(np.asarray(X, dtype=np.float64))
        return self._backward(logits, acts, pre, masks, self._encode(np.asarray(y)),
                              None if sample_weight is None else np.asarray(sample_weight, dtype=np.float64))

    # ------------------------------------------------------------------ training

    def partial_fit(self, X, y, classes=None, sample_weight=None):
        """Run one SGD epoch; the first call needs ``classes`` unless ``y`` covers them."""
        X, y = check_X_y(X, y)
        if not hasattr(self, "coefs_"):
            self.initialize(X.shape[1], np.unique(y) if classes is None else classes)
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model expects {self.n_features_in_}")
        y_idx = self._encode(y)
        sw = None if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        lr = self.current_learning_rate()
        rng = self._rng
        order = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, X.shape[0], self.batch_size):
            batch = order[start:start + self.batch_size]
            logits, acts, pre, masks = self._forward(X[batch], dropout_rng=rng)
            loss, gW, gb = self._backward(logits, acts, pre, masks, y_idx[batch],
                                          None if sw is None else sw[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {self.epochs_done_ + 1}")
            total += loss * batch.size
            for l in range(len(self.coefs_)):
                self.coefs_[l] -= lr * gW[l]
                self.intercepts_[l] -= lr * gb[l]
        if not all(np.isfinite(W).all() for W in self.coefs_ + self.intercepts_):
            raise TrainingDivergedError(f"non-finite weights after epoch {self.epochs_done_ + 1}")
        self.epochs_done_ += 1
        self.loss_curve_.append(total / X.shape[0])
        return self

    def fit(self, X, y, sample_weight=None, classes=None):
        X, y = check_X_y(X, y)
        self.initialize(X.shape[1], np.unique(y) if classes is None else classes)
        for _ in range(self.n_epochs):
            self.partial_fit(X, y, sample_weight=sample_weight)
        return self

    # ------------------------------------------------------------------ inference

    def decision_function(self, X):
        check_is_fitted(self, "coefs_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model expects {self.n_features_in_}")
        return self._forward(X)[0]

    def predict_proba(self, X):
        return np.exp(_log_softmax(self.decision_function(X)))

    def predict(self, X):
        """Class with the highest output score; ties go to the lowest index."""
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def effective_affine(self):
        """Collapse an identity-activation network into one ``(W, b)`` pair."""
        check_is_fitted(self, "coefs_")
        if self.activation != "identity" and len(self.coefs_) > 1:
            raise ValueError("only identity-activation networks are affine")
        W, b = self.coefs_[0].copy(), self.intercepts_[0].copy()
        for Wl, bl in zip(self.coefs_[1:], self.intercepts_[1:]):
            W, b = W @ Wl, b @ Wl + bl
        return W, b
