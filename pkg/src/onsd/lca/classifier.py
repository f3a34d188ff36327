"""Frame-level classifier head: max-abs pooling of the sparse code into a
K-vector, then a logistic model trained by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LcaError
from .coding import Activations, Dictionary, lca_encode


@dataclass(frozen=True)
class FrameClassifier:
    weights: np.ndarray  # (K,)
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise LcaError(f"weights must be a vector, got shape {w.shape}")
        object.__setattr__(self, "weights", w)

    def predict_proba(self, features: np.ndarray) -> float:
        features = np.asarray(features, dtype=np.float64)
        if features.shape != self.weights.shape:
            raise LcaError(f"feature shape {features.shape} != weights {self.weights.shape}")
        return _sigmoid(float(self.weights @ features) + self.bias)


def _sigmoid(z: float | np.ndarray):
    return 1.0 / (1.0 + np.exp(-z))


def pool_code(activations: Activations) -> np.ndarray:
    """Max absolute coefficient per feature map."""
    if activations.code.size == 0:
        return np.zeros(activations.code.shape[0])
    return np.abs(activations.code).max(axis=(1, 2))


def train_classifier(
    features: list[np.ndarray],
    labels: list[int],
    epochs: int = 500,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> FrameClassifier:
    """Fit the logistic head on pooled feature vectors.

    Full-batch gradient descent on the mean cross-entropy, with seeded
    small random initialization; deterministic for a fixed seed.
    """
    if len(features) != len(labels):
        raise LcaError("features and labels differ in length")
    if len(features) == 0:
        raise LcaError("empty training set")
    y = np.asarray(labels, dtype=np.float64)
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise LcaError("labels must be 0 or 1")
    if y.min() == y.max():
        raise LcaError("training set contains a single class; need both")
    X = np.asarray(features, dtype=np.float64)
    n, k = X.shape

    rng = np.random.default_rng(seed)
    w = 0.01 * rng.standard_normal(k)
    b = 0.0
    for _ in range(epochs):
        p = _sigmoid(X @ w + b)
        err = p - y
        w -= learning_rate * (X.T @ err) / n
        b -= learning_rate * float(err.mean())
    return FrameClassifier(w, float(b))


def classify_frame(
    region: np.ndarray,
    dictionary: Dictionary,
    classifier: FrameClassifier,
    lam: float,
    step: float,
    n_steps: int,
    backend: str | None = None,
) -> float:
    """Probability that the frame's nerve region is above threshold."""
    acts = lca_encode(region, dictionary, lam=lam, step=step, n_steps=n_steps, backend=backend)
    return classifier.predict_proba(pool_code(acts))
