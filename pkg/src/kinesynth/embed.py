"""Exact t-SNE on flattened trials."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .numerics import SeededRng

PERPLEXITY_TOL = 1e-4
MIN_GAIN = 0.01


@dataclass
class EmbedConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    momentum: float = 0.5
    final_momentum: float = 0.8
    seed: int = 0

    def validate(self, n_points: int | None = None) -> None:
        if self.perplexity <= 0 or self.iterations < 0 or self.learning_rate <= 0:
            raise ParameterError("perplexity and learning rate must be positive, iterations >= 0")
        if self.exaggeration < 1 or self.exaggeration_iters < 0:
            raise ParameterError("exaggeration must be >= 1 for a non-negative number of iterations")
        if n_points is not None and not self.perplexity < (n_points - 1) / 3:
            raise ParameterError(
                f"perplexity {self.perplexity} is infeasible for {n_points} points "
                f"(must be below {(n_points - 1) / 3:.3f})"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _row_entropy(d: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # shift by the smallest distance for stability; entropy is unaffected
    w = np.exp(-(d - d.min()) * beta)
    s = w.sum()
    p = w / s
    h = math.log(s) + beta * float(np.dot(d - d.min(), p))
    return h, p


def conditional_affinities(D: np.ndarray, perplexity: float, tol: float = PERPLEXITY_TOL,
                           max_iter: int = 200) -> np.ndarray:
    """Row-stochastic p_{j|i}; each row's entropy is within ``tol`` of log(perplexity)."""
    n = len(D)
    target = math.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, math.inf
        if d.max() > d.min():
            beta = 1.0 / max(np.median(d - d.min()), 1e-12)
        for _ in range(max_iter):
            h, p = _row_entropy(d, beta)
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2 if hi == math.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        P[i, np.arange(n) != i] = p
    return P


def joint_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    P = conditional_affinities(squared_distances(X), perplexity)
    P = (P + P.T) / (2.0 * len(X))
    return np.maximum(P, 1e-12)


def kl_and_grad(Y: np.ndarray, P: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q) for the Student-t kernel and its gradient w.r.t. ``Y``."""
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-12)
    off = ~np.eye(len(Y), dtype=bool)
    kl = float(np.sum(P[off] * np.log(P[off] / Q[off])))
    W = (P - Q) * num
    np.fill_diagonal(W, 0.0)
    grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
    return kl, grad


def effective_learning_rate(cfg: EmbedConfig, n_points: int) -> float:
    """The configured rate, capped at n/2.

    Joint affinities scale as 1/n, so on small sets a fixed rate of 200
    overshoots under early exaggeration and the embedding oscillates.
    """
    return min(cfg.learning_rate, n_points / 2.0)


@dataclass
class Embedding:
    coords: np.ndarray
    kl: list[float] = field(default_factory=list)


def _restart(Y, kl, grad, P, lr, halvings: int = 40):
    """Plain gradient step, halved until the KL stops rising; stays put if none helps."""
    step = lr
    for _ in range(halvings):
        trial = Y - step * grad
        trial -= trial.mean(axis=0)
        trial_kl, trial_grad = kl_and_grad(trial, P)
        if trial_kl <= kl:
            return trial, trial_kl, trial_grad
        step /= 2
    return Y, kl, grad


def tsne(points: np.ndarray, cfg: EmbedConfig | None = None) -> Embedding:
    cfg = cfg or EmbedConfig()
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"t-SNE expects (points, features), got shape {X.shape}")
    n = len(X)
    if n < 5 or X.shape[1] < 1:
        raise ParameterError(f"t-SNE needs at least 5 points with >= 1 feature, got {X.shape}")
    cfg.validate(n)
    P = joint_affinities(X, cfg.perplexity)
    Y = SeededRng(cfg.seed).normal((n, 2), 0.0, 1e-4)
    Y -= Y.mean(axis=0)
    lr = effective_learning_rate(cfg, n)
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    out = Embedding(Y)
    for it in range(cfg.iterations):
        early = it < cfg.exaggeration_iters
        if early:
            _, grad = kl_and_grad(Y, P * cfg.exaggeration)
        elif it == cfg.exaggeration_iters:
            # the exaggerated phase's momentum would overshoot the true objective
            velocity = np.zeros_like(Y)
            gains = np.ones_like(Y)
            kl, grad = kl_and_grad(Y, P)
        mom = cfg.momentum if early else cfg.final_momentum
        # per-coordinate gains grow while the motion keeps following the descent direction
        gains = np.where(np.sign(grad) != np.sign(velocity), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, MIN_GAIN)
        velocity = mom * velocity - lr * gains * grad
        trial = Y + velocity
        trial -= trial.mean(axis=0)
        trial_kl, trial_grad = kl_and_grad(trial, P)
        if not early and trial_kl > kl:
            trial, trial_kl, trial_grad = _restart(Y, kl, grad, P, lr)
            velocity = np.zeros_like(Y)
            gains = np.ones_like(Y)
        Y = trial
        out.kl.append(trial_kl)
        if not early:
            kl, grad = trial_kl, trial_grad
    out.coords = Y
    return out


def write_embedding_csv(path, coords: np.ndarray, trials) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "task", "impairment", "provenance"])
        for (x, y), t in zip(coords, trials):
            w.writerow([repr(float(x)), repr(float(y)), t.task, t.impairment, t.provenance])


def read_embedding_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["x"], r["y"] = float(r["x"]), float(r["y"])
    return rows
