"""Combined-CCA with pooled cross-subject prototype responses.

For a test segment ``X`` and class ``k`` four correlations are formed from
the sinusoidal reference ``Y_k`` and the prototype ``P_k`` (mean training
segment of class ``k``):

    r1  canonical correlation of (X, Y_k)
    r2  corr(w1'X, w1'P_k), w1 = X-side CCA weight of (X, P_k)
    r3  corr(w2'X, w2'P_k), w2 = X-side CCA weight of (X, Y_k)
    r4  corr(w3'X, w3'P_k), w3 = P-side CCA weight of (P_k, Y_k)

and fused into one score per class.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cca import ReferenceBank, _center, _check_segments, _cov, canonical_correlation, inv_sqrt
from .datastore import Dataset

FUSIONS = ("signed_square", "mean")


@dataclass(frozen=True)
class PrototypeBank:
    templates: np.ndarray  # (K, C, T)
    counts: np.ndarray  # (K,)

    @property
    def degenerate(self) -> np.ndarray:
        """Classes whose template has no variance on any channel."""
        c = _center(self.templates)
        return ~(np.abs(c).max(axis=(1, 2)) > 0)


def build_prototypes(train: Dataset, segments=None) -> PrototypeBank:
    """Mean segment per class over every training trial and subject.

    Args:
        train: training-fold data only.
        segments: optionally restrict to these segment indices (default:
            pool all segment positions).
    """
    mask = np.ones(len(train), bool)
    if segments is not None:
        mask &= np.isin(train.segment, np.asarray(segments))
    K = train.stimulus.n_classes
    labels = train.class_id[mask]
    data = train.data[mask].astype(np.float64)
    counts = np.bincount(labels, minlength=K)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"no training segments for classes {missing.tolist()}")
    sums = np.zeros((K,) + data.shape[1:])
    np.add.at(sums, labels, data)
    return PrototypeBank(sums / counts[:, None, None], counts)


def _pearson(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = _center(a), _center(b)
    num = (a * b).sum(-1)
    den = np.sqrt((a * a).sum(-1) * (b * b).sum(-1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = num / den
    return np.where(den > 0, r, 0.0)


def correlation_set(X, prototypes: PrototypeBank, bank: ReferenceBank) -> np.ndarray:
    """The four correlations ``(n, K, 4)`` for segments ``X (n, C, T)``."""
    X = np.asarray(X, np.float64)
    _check_segments(X, bank)
    P = prototypes.templates
    if P.shape[1:] != X.shape[1:] or P.shape[0] != bank.n_classes:
        raise ValueError(f"prototypes {P.shape} do not match segments {X.shape[1:]} / bank")
    ok = ~prototypes.degenerate
    Xc = _center(X)[:, None]  # (n, 1, C, T)
    Pc = _center(P)[None]  # (1, K, C, T)

    r1, w2, _ = canonical_correlation(X[:, None], bank.refs[None])
    # CCA(X, P_k) for usable prototypes only
    w1 = np.zeros_like(w2)
    kx = inv_sqrt(_cov(Xc, Xc))
    kp = inv_sqrt(_cov(Pc[:, ok], Pc[:, ok]))
    u, _, _ = np.linalg.svd(kx @ _cov(Xc, Pc[:, ok]) @ kp)
    w1[:, ok] = (kx @ u[..., :, :1])[..., 0]
    w3 = np.zeros((P.shape[0], P.shape[1]))
    if ok.any():
        _, w3[ok], _ = canonical_correlation(P[ok], bank.refs[ok])
    w3 = np.broadcast_to(w3[None], w2.shape)

    def proj_corr(w):
        a = np.einsum("nkc,nct->nkt", w, Xc[:, 0])
        b = np.einsum("nkc,kct->nkt", w, Pc[0])
        return _pearson(a, b)

    r = np.stack([r1, proj_corr(w1), proj_corr(w2), proj_corr(w3)], axis=-1)
    r[:, ~ok, 1:] = 0.0
    return r


def fuse(r: np.ndarray, fusion: str = "signed_square") -> np.ndarray:
    if fusion == "signed_square":
        return (np.sign(r) * r**2).sum(-1)
    if fusion == "mean":
        return r.mean(-1)
    raise ValueError(f"unknown fusion {fusion!r}; choose from {FUSIONS}")


def combined_cca_scores(X, prototypes: PrototypeBank, bank: ReferenceBank,
                        fusion: str = "signed_square") -> np.ndarray:
    """Fused score per class ``(n, K)``; degenerate prototype classes get ``-inf``."""
    p = fuse(correlation_set(X, prototypes, bank), fusion)
    bad = prototypes.degenerate
    if bad.any():
        warnings.warn(f"degenerate (constant) prototypes for classes {np.flatnonzero(bad).tolist()}; "
                      "excluded from Combined-CCA decisions", RuntimeWarning, stacklevel=2)
        p[:, bad] = -np.inf
    return p


def combined_cca_classify(X, prototypes: PrototypeBank, bank: ReferenceBank,
                          fusion: str = "signed_square") -> tuple[int, np.ndarray]:
    X = np.asarray(X, np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a single (C, T) segment")
    p = combined_cca_scores(X[None], prototypes, bank, fusion)[0]
    return int(np.argmax(p)), p
