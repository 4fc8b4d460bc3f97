"""Exact t-SNE (O(n^2) gradients) for embedding hidden activations in 2-D."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_P_FLOOR = 1e-12


@dataclass
class Embedding2D:
    points: np.ndarray  # (n, 2)
    kl_divergence: float
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    kl_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not np.isfinite(self.points).all():
            raise ValueError("embedding has non-finite coordinates")
        for name, arr in self.labels.items():
            if len(arr) != len(self.points):
                raise ValueError(f"label array {name!r} has length {len(arr)}, expected {len(self.points)}")


def _sq_distances(X: np.ndarray) -> np.ndarray:
    sq = (X * X).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def conditional_probabilities(X, perplexity: float = 30.0, tol: float = 1e-5,
                              max_iter: int = 200) -> np.ndarray:
    """Row-stochastic ``P[i, j] = p(j | i)`` with each row's entropy matched to ``log(perplexity)``.

    The Gaussian precision of every row is found by bisection on the log scale.
    """
    X = np.asarray(X, np.float64)
    n = len(X)
    D = _sq_distances(X)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        lo, hi, beta = -np.inf, np.inf, 1.0
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            s = w.sum()
            H = np.log(s) + beta * (d * w).sum() / s
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = beta / 2 if lo == -np.inf else (beta + lo) / 2
        row = w / s
        P[i, :i] = row[:i]
        P[i, i + 1:] = row[i:]
    return P


def tsne(features, perplexity: float = 30.0, n_iter: int = 1000, seed: int = 0,
         early_exaggeration: float = 12.0, exaggeration_iters: int = 250,
         learning_rate: float | None = None, labels: dict | None = None) -> Embedding2D:
    """Embed ``features (n, d)`` in 2-D.

    Gradient descent with momentum 0.5 during the exaggeration phase and 0.8
    afterwards; the learning rate defaults to ``n / 12``. The KL divergence
    of every iteration is kept in ``kl_history``.

    Raises:
        ValueError: ``n <= 3 * perplexity`` or all rows identical.
    """
    X = np.asarray(features, np.float64)
    if X.ndim != 2:
        raise ValueError("features must be 2-D")
    n = len(X)
    if n <= 3 * perplexity:
        raise ValueError(f"need more than 3*perplexity = {3 * perplexity:g} points, got {n}")
    if np.ptp(X, axis=0).max() == 0:
        raise ValueError("all feature rows are identical; nothing to embed")
    lr = n / 12.0 if learning_rate is None else learning_rate
    Pc = conditional_probabilities(X, perplexity)
    P = np.maximum((Pc + Pc.T) / (2.0 * n), _P_FLOOR)
    np.fill_diagonal(P, 0.0)
    logP = np.log(np.where(P > 0, P, 1.0))
    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, (n, 2))
    vel = np.zeros_like(Y)
    kl = np.empty(n_iter)
    for it in range(n_iter):
        exag = early_exaggeration if it < exaggeration_iters else 1.0
        mom = 0.5 if it < exaggeration_iters else 0.8
        num = 1.0 / (1.0 + _sq_distances(Y))
        np.fill_diagonal(num, 0.0)
        Z = num.sum()
        Q = np.maximum(num / Z, _P_FLOOR)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        vel = mom * vel - lr * grad
        Y = Y + vel
        Y -= Y.mean(axis=0)
        np.fill_diagonal(Q, 1.0)
        kl[it] = float((P * (logP - np.log(Q))).sum())
    return Embedding2D(Y, float(kl[-1]), {k: np.asarray(v) for k, v in (labels or {}).items()}, kl)
