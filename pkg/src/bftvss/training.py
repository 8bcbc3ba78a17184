"""Toy learning task: two-class logistic regression on synthetic Gaussians.

Deterministic, seconds-fast, and differentiable enough to exercise every
protocol path.  Labels are sign(x . w_true) with a small flip rate, so the
achievable accuracy ceiling is 1 - flip_rate and convergence is governed by
how well the learned direction aligns with w_true.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray  # labels in {0, 1}


def make_true_weights(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    w = rng.normal(size=dim)
    return w / np.linalg.norm(w)


def make_dataset(dim: int, samples: int, w_true: np.ndarray, seed: int,
                 flip_rate: float = 0.02) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(samples, dim))
    y = (x @ w_true > 0).astype(float)
    flips = rng.random(samples) < flip_rate
    y[flips] = 1.0 - y[flips]
    return Dataset(x=x, y=y)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -30, 30)))


def loss(w: np.ndarray, data: Dataset) -> float:
    """Mean cross-entropy of the logistic model on the dataset."""
    p = _sigmoid(data.x @ w)
    eps = 1e-12
    return float(-np.mean(data.y * np.log(p + eps) + (1 - data.y) * np.log(1 - p + eps)))


def gradient(w: np.ndarray, data: Dataset) -> np.ndarray:
    p = _sigmoid(data.x @ w)
    return data.x.T @ (p - data.y) / len(data.y)


def local_train(w: np.ndarray, data: Dataset, learning_rate: float) -> np.ndarray:
    """One full-batch gradient step; returns the updated parameter vector."""
    return w - learning_rate * gradient(w, data)


def accuracy(w: np.ndarray, data: Dataset) -> float:
    pred = (data.x @ w > 0).astype(float)
    return float(np.mean(pred == data.y))


def initial_weights(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(scale=0.01, size=dim)
