"""Trainable hidden layer on top of frozen features, fit with softmax cross-entropy.

The model is ``logits = head @ relu(W @ x + b)``; after training only the
hidden layer is used as the new feature map.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, ValidationError
from .backends import l2_normalize


@dataclass(eq=False)
class Adapter:
    W: np.ndarray
    b: np.ndarray
    head: np.ndarray
    classes: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.head = np.asarray(self.head, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] < 1 or self.b.shape != (self.W.shape[0],):
            raise ValidationError("adapter needs W of shape (hidden, input) and b of shape (hidden,)")
        if self.head.ndim != 2 or self.head.shape[1] != self.W.shape[0]:
            raise ValidationError("adapter head must have shape (classes, hidden)")
        if not all(np.all(np.isfinite(a)) for a in (self.W, self.b, self.head)):
            raise ValidationError("adapter parameters must be finite")

    @property
    def input_dim(self):
        return self.W.shape[1]

    @property
    def hidden_dim(self):
        return self.W.shape[0]

    def to_dict(self):
        return {"W": self.W.tolist(), "b": self.b.tolist(), "head": self.head.tolist(),
                "classes": list(self.classes), "losses": [float(x) for x in self.losses]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["W"], d["b"], d["head"], list(d.get("classes", [])), list(d.get("losses", [])))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def adapt_many(adapter, features):
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != adapter.input_dim:
        raise ValidationError(f"feature dim {features.shape[1]} != adapter input dim {adapter.input_dim}")
    return l2_normalize(np.maximum(features @ adapter.W.T + adapter.b, 0.0))


def adapt(adapter, f):
    """``relu(W f + b)``, L2-normalized."""
    return adapt_many(adapter, np.asarray(f)[None])[0]


def loss_and_grad(W, b, head, X, y, weight_decay=0.0):
    """Mean softmax cross-entropy plus ``weight_decay / 2 * (|W|^2 + |head|^2)``.

    Returns ``(loss, (dW, db, dhead))``.
    """
    n = len(X)
    z = X @ W.T + b
    h = np.maximum(z, 0.0)
    logits = h @ head.T
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    loss = -np.mean(np.log(p[np.arange(n), y] + 1e-300))
    loss += 0.5 * weight_decay * (np.sum(W * W) + np.sum(head * head))
    d_logits = p
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    d_head = d_logits.T @ h + weight_decay * head
    d_z = (d_logits @ head) * (z > 0)
    d_W = d_z.T @ X + weight_decay * W
    d_b = d_z.sum(axis=0)
    return float(loss), (d_W, d_b, d_head)


def init_adapter(input_dim, hidden_dim, num_classes, seed):
    rng = np.random.default_rng(int(seed))
    bw = 1.0 / math.sqrt(input_dim)
    bh = 1.0 / math.sqrt(hidden_dim)
    W = rng.uniform(-bw, bw, (hidden_dim, input_dim))
    head = rng.uniform(-bh, bh, (num_classes, hidden_dim))
    return W, np.zeros(hidden_dim), head


def train_adapter(features, labels, hidden_dim, *, lr=0.5, epochs=30, batch_size=32,
                  weight_decay=1e-4, seed=0):
    """Fit the hidden layer and a linear softmax head by mini-batch gradient descent.

    Deterministic per ``seed``: it fixes both the initialization and the
    per-epoch shuffles. The full-data loss after every epoch is kept in
    ``Adapter.losses``.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError("features must be a 2-D array of equal-length vectors")
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    if len(classes) < 2:
        raise ValidationError("train_adapter needs at least two classes")
    if hidden_dim < 1:
        raise ValidationError("hidden_dim must be >= 1")
    W, b, head = init_adapter(X.shape[1], hidden_dim, len(classes), seed)
    rng = np.random.default_rng([int(seed), 1])
    losses = []
    n = len(X)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            _, (dW, db, dh) = loss_and_grad(W, b, head, X[idx], y[idx], weight_decay)
            W -= lr * dW
            b -= lr * db
            head -= lr * dh
        loss, _ = loss_and_grad(W, b, head, X, y, weight_decay)
        if not math.isfinite(loss):
            raise DivergenceError(f"adapter training diverged at epoch {epoch}")
        losses.append(loss)
    return Adapter(W, b, head, [c.item() if hasattr(c, "item") else c for c in classes], losses)


def predict(adapter, features):
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    h = np.maximum(X @ adapter.W.T + adapter.b, 0.0)
    return np.argmax(h @ adapter.head.T, axis=1)
