"""Cross-entropy losses on probabilities, with their gradients.

Probabilities are clamped to [EPS, 1 - EPS] before the log; the gradient
is zero wherever the clamp is active, matching the clamp's derivative.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError

EPS = 1e-7


def _check_labels(probs, labels):
    labels = np.asarray(labels)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise DimensionError(
            f"probs must be (batch, classes) and labels (batch,), got {probs.shape} and {labels.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        bad = labels[(labels < 0) | (labels >= probs.shape[1])][0]
        raise IndexError(f"label {bad} out of range [0, {probs.shape[1]})")
    return labels.astype(np.int64)


def sparse_categorical_cross_entropy(probs: np.ndarray, labels) -> float:
    labels = _check_labels(probs, labels)
    picked = np.clip(probs[np.arange(len(labels)), labels], EPS, 1.0 - EPS)
    return float(-np.log(picked).mean())


def sparse_categorical_cross_entropy_grad(probs: np.ndarray, labels) -> np.ndarray:
    labels = _check_labels(probs, labels)
    n = len(labels)
    rows = np.arange(n)
    picked = probs[rows, labels]
    grad = np.zeros_like(probs)
    inside = (picked > EPS) & (picked < 1.0 - EPS)
    grad[rows, labels] = np.where(inside, -1.0 / (n * np.where(inside, picked, 1.0)), 0.0)
    return grad


def binary_cross_entropy(p: np.ndarray, target) -> float:
    p = np.asarray(p, dtype=np.float64)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), p.shape)
    pc = np.clip(p, EPS, 1.0 - EPS)
    return float(-(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).mean())


def binary_cross_entropy_grad(p: np.ndarray, target) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    t = np.broadcast_to(np.asarray(target, dtype=np.float64), p.shape)
    inside = (p > EPS) & (p < 1.0 - EPS)
    pc = np.clip(p, EPS, 1.0 - EPS)
    g = (-t / pc + (1.0 - t) / (1.0 - pc)) / p.size
    return np.where(inside, g, 0.0)
