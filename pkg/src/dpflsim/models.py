"""Small dense models with analytic gradients.

Parameters are always a flat float64 vector so the training engine can treat
every model as an opaque point in R^v. Classification losses are multinomial
cross-entropy over softmax logits; regression is plain mean squared error.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError


def _check_batch(X, y):
    if X.shape[0] == 0:
        raise DomainError("batch must be nonempty")
    if X.shape[0] != np.shape(y)[0]:
        raise DomainError(f"feature/label count mismatch: {X.shape[0]} vs {np.shape(y)[0]}")


def _softmax_ce(logits, y):
    """Mean cross-entropy and softmax probabilities, numerically stable."""
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + m
    loss = float(np.mean(lse[:, 0] - logits[np.arange(len(y)), y]))
    probs = np.exp(logits - lse)
    return loss, probs


class LinearRegression:
    """y ~ X w + b, mean squared error."""

    def __init__(self, n_features: int):
        self.n_features = n_features
        self.dim = n_features + 1

    def loss_and_grad(self, params, X, y):
        _check_batch(X, y)
        w, b = params[:-1], params[-1]
        r = X @ w + b - y
        loss = float(np.mean(r * r))
        gw = 2.0 * (X.T @ r) / len(r)
        gb = 2.0 * float(np.mean(r))
        return loss, np.concatenate([gw, [gb]])

    def predict(self, params, X):
        return X @ params[:-1] + params[-1]

    def init_params(self, rng) -> np.ndarray:
        return np.zeros(self.dim)


class LogisticRegression:
    """Multinomial logit, params are a (classes, features+1) matrix flattened
    row-major with the bias in the last column."""

    def __init__(self, n_features: int, n_classes: int):
        if n_classes < 2:
            raise DomainError(f"need at least 2 classes, got {n_classes}")
        self.n_features = n_features
        self.n_classes = n_classes
        self.dim = n_classes * (n_features + 1)

    def _weights(self, params):
        W = params.reshape(self.n_classes, self.n_features + 1)
        return W[:, :-1], W[:, -1]

    def loss_and_grad(self, params, X, y):
        _check_batch(X, y)
        W, b = self._weights(params)
        loss, probs = _softmax_ce(X @ W.T + b, y)
        d = probs.copy()
        d[np.arange(len(y)), y] -= 1.0
        d /= len(y)
        gW = d.T @ X
        gb = d.sum(axis=0)
        return loss, np.hstack([gW, gb[:, None]]).ravel()

    def predict(self, params, X):
        W, b = self._weights(params)
        return np.argmax(X @ W.T + b, axis=1)

    def init_params(self, rng) -> np.ndarray:
        return np.zeros(self.dim)


class TanhMlp:
    """One tanh hidden layer, softmax output."""

    def __init__(self, n_features: int, hidden: int, n_classes: int):
        if n_classes < 2:
            raise DomainError(f"need at least 2 classes, got {n_classes}")
        if hidden < 1:
            raise DomainError(f"hidden width must be positive, got {hidden}")
        self.n_features = n_features
        self.hidden = hidden
        self.n_classes = n_classes
        self.dim = hidden * (n_features + 1) + n_classes * (hidden + 1)

    def unpack(self, params):
        u, h, k = self.n_features, self.hidden, self.n_classes
        i = 0
        W1 = params[i : i + h * u].reshape(h, u); i += h * u
        b1 = params[i : i + h]; i += h
        W2 = params[i : i + k * h].reshape(k, h); i += k * h
        b2 = params[i : i + k]
        return W1, b1, W2, b2

    def loss_and_grad(self, params, X, y):
        _check_batch(X, y)
        W1, b1, W2, b2 = self.unpack(params)
        A = np.tanh(X @ W1.T + b1)
        loss, probs = _softmax_ce(A @ W2.T + b2, y)
        d2 = probs.copy()
        d2[np.arange(len(y)), y] -= 1.0
        d2 /= len(y)
        gW2 = d2.T @ A
        gb2 = d2.sum(axis=0)
        d1 = (d2 @ W2) * (1.0 - A * A)
        gW1 = d1.T @ X
        gb1 = d1.sum(axis=0)
        return loss, np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])

    def predict(self, params, X):
        W1, b1, W2, b2 = self.unpack(params)
        return np.argmax(np.tanh(X @ W1.T + b1) @ W2.T + b2, axis=1)

    def init_params(self, rng) -> np.ndarray:
        # uniform in +-1/sqrt(fan_in) per layer, biases included
        u, h, k = self.n_features, self.hidden, self.n_classes
        s1, s2 = 1.0 / math.sqrt(u), 1.0 / math.sqrt(h)
        return np.concatenate([
            rng.uniform(-s1, s1, size=h * u),
            rng.uniform(-s1, s1, size=h),
            rng.uniform(-s2, s2, size=k * h),
            rng.uniform(-s2, s2, size=k),
        ])


def loss_and_grad(model, params, batch):
    X, y = batch
    return model.loss_and_grad(params, X, y)


def evaluate(model, params, X, y):
    """(mean loss, accuracy); accuracy is nan for regression models."""
    loss, _ = model.loss_and_grad(params, X, y)
    if isinstance(model, LinearRegression):
        return loss, float("nan")
    pred = model.predict(params, X)
    return loss, float(np.mean(pred == y))


def make_model(kind: str, n_features: int, n_classes: int = 2, hidden: int = 16):
    if kind == "linear":
        return LinearRegression(n_features)
    if kind == "logistic":
        return LogisticRegression(n_features, n_classes)
    if kind == "mlp":
        return TanhMlp(n_features, hidden, n_classes)
    raise DomainError(f"unknown model kind {kind!r}; expected linear, logistic, or mlp")
