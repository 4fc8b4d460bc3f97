"""Finite-difference gradient checking and small dataset builders shared by the tests."""
import numpy as np

from ssvepnet.datastore import Dataset
from ssvepnet.stimulus import StimulusTable


def numerical_grad(f, x, h=1e-4):
    """Fourth-order central differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place).

    The five-point stencil keeps truncation error near 1e-16 at h = 1e-4 while
    rounding noise stays near 1e-12, which matters for gradients that are
    structurally tiny (e.g. a batch-norm gain whose effect the next batch norm
    removes up to its epsilon).
    """
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        vals = []
        for step in (2 * h, h, -h, -2 * h):
            x[i] = old + step
            vals.append(f())
        x[i] = old
        g[i] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return g


def rel_error(a, b, floor=1e-8):
    """Norm-based relative error; ``floor`` keeps exactly-zero gradients from dividing by zero."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    den = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / den)


def make_dataset(rng, n=6, C=2, T=16, subjects=(0, 1, 2), K=3, fs=256.0):
    """A small random Dataset with a K-class stimulus table."""
    stim = StimulusTable(tuple(10.0 + k for k in range(K)), tuple(0.0 for _ in range(K)))
    subj = np.resize(np.asarray(subjects), n)
    return Dataset(rng.standard_normal((n, C, T)).astype(np.float32), subj,
                   np.arange(n) % K, np.zeros(n, int), np.zeros(n, int), fs,
                   [f"c{i}" for i in range(C)], stim, "test")
