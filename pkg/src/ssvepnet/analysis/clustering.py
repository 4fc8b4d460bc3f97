"""Cluster-recovery scoring for embeddings."""
from __future__ import annotations

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import linear_sum_assignment


def kmeans(points, k: int, seed: int = 0, n_init: int = 10) -> np.ndarray:
    """Best-of-``n_init`` k-means++ labels (lowest within-cluster sum of squares)."""
    pts = np.asarray(points, np.float64)
    rng = np.random.default_rng(seed)
    best, best_cost = None, np.inf
    for _ in range(n_init):
        centroids, labels = kmeans2(pts, k, minit="++", seed=rng, iter=100)
        cost = ((pts - centroids[labels]) ** 2).sum()
        if cost < best_cost:
            best, best_cost = labels, cost
    return best


def matched_agreement(true, pred) -> float:
    """Fraction of points whose cluster maps to their label under the best one-to-one matching."""
    true, pred = np.asarray(true), np.asarray(pred)
    t_ids, t = np.unique(true, return_inverse=True)
    p_ids, p = np.unique(pred, return_inverse=True)
    table = np.zeros((len(p_ids), len(t_ids)), np.int64)
    np.add.at(table, (p, t), 1)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / len(true))
