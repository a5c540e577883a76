"""Hard class assignments from probability rows."""

from __future__ import annotations

import numpy as np

from .simgen import make_rng


def bayes_classify(probs) -> np.ndarray:
    """Most probable class per row; ``argmax`` already breaks ties toward the lowest index."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return np.argmax(probs, axis=1).astype(np.int64)


def stochastic_classify(probs, seed) -> np.ndarray:
    """Draw each row's class from the row itself: one uniform per row, inverse CDF."""
    probs = np.asarray(probs, dtype=float)
    n, k = probs.shape
    u = make_rng(seed).random(n)
    cdf = np.cumsum(probs, axis=1)
    labels = (u[:, None] >= cdf).sum(axis=1)
    # rounding can leave cdf[-1] a hair below 1; fall back to the last class with mass
    overflow = labels >= k
    if np.any(overflow):
        last = k - 1 - np.argmax(probs[overflow, ::-1] > 0, axis=1)
        labels[overflow] = last
    return labels.astype(np.int64)
