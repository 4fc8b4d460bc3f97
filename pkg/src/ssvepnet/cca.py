"""Calibration-free CCA frequency detection with sinusoidal references.

The canonical correlation is computed by whitening both covariance blocks
with a floored symmetric inverse square root and taking the top singular
value of the whitened cross-covariance. Everything below works on stacks of
problems (leading batch axes) so that whole test folds are scored at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stimulus import StimulusTable

EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class ReferenceBank:
    """Sin/cos references for every class: ``refs[k]`` is ``(2*n_harmonics, T)``.

    Row ``2*(h-1)`` is ``sin(2*pi*h*f_k*t)`` and row ``2*(h-1)+1`` the cosine.
    """

    refs: np.ndarray
    frequencies: tuple[float, ...]
    n_harmonics: int
    sample_rate_hz: float

    @property
    def n_classes(self) -> int:
        return self.refs.shape[0]

    @property
    def n_samples(self) -> int:
        return self.refs.shape[2]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.refs[k]


@dataclass(frozen=True)
class CcaResult:
    rho: float
    w_x: np.ndarray
    w_y: np.ndarray


def build_reference_bank(stimulus: StimulusTable, n_harmonics: int, n_samples: int,
                         sample_rate_hz: float) -> ReferenceBank:
    if n_harmonics < 1:
        raise ValueError("n_harmonics must be >= 1")
    top = n_harmonics * max(stimulus.frequencies)
    if top >= sample_rate_hz / 2:
        raise ValueError(f"harmonic {n_harmonics} of {max(stimulus.frequencies)} Hz aliases at "
                         f"{sample_rate_hz} Hz")
    t = np.arange(n_samples) / sample_rate_hz
    refs = np.empty((stimulus.n_classes, 2 * n_harmonics, n_samples))
    for k, f in enumerate(stimulus.frequencies):
        for h in range(1, n_harmonics + 1):
            refs[k, 2 * (h - 1)] = np.sin(2 * np.pi * h * f * t)
            refs[k, 2 * (h - 1) + 1] = np.cos(2 * np.pi * h * f * t)
    refs.setflags(write=False)
    return ReferenceBank(refs, stimulus.frequencies, n_harmonics, float(sample_rate_hz))


def _center(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=-1, keepdims=True)


def _cov(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ np.swapaxes(b, -1, -2) / a.shape[-1]


def inv_sqrt(cov: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric inverse square root, eigenvalues floored at ``floor * trace``."""
    w, v = np.linalg.eigh(cov)
    tr = np.trace(cov, axis1=-2, axis2=-1)[..., None]
    w = np.maximum(w, floor * tr)
    return (v / np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def _check_not_constant(c: np.ndarray, name: str) -> None:
    tr = np.trace(c, axis1=-2, axis2=-1)
    if np.any(~(tr > 0)):
        raise ValueError(f"{name} has no variance (all rows constant)")


def canonical_correlation(X: np.ndarray, Y: np.ndarray, return_weights: bool = True):
    """Largest canonical correlation for stacks ``X (..., C, T)``, ``Y (..., R, T)``.

    Returns ``rho`` (and the weight vectors ``w_x (..., C)``, ``w_y (..., R)``
    when requested). Rows are mean-centred first.
    """
    Xc, Yc = _center(np.asarray(X, np.float64)), _center(np.asarray(Y, np.float64))
    cxx, cyy = _cov(Xc, Xc), _cov(Yc, Yc)
    _check_not_constant(cxx, "X")
    _check_not_constant(cyy, "Y")
    kx, ky = inv_sqrt(cxx), inv_sqrt(cyy)
    m = kx @ _cov(Xc, Yc) @ ky
    if not return_weights:
        return np.minimum(np.linalg.svd(m, compute_uv=False)[..., 0], 1.0)
    u, s, vt = np.linalg.svd(m)
    rho = np.minimum(s[..., 0], 1.0)
    w_x = (kx @ u[..., :, :1])[..., 0]
    w_y = (ky @ np.swapaxes(vt, -1, -2)[..., :, :1])[..., 0]
    return rho, w_x, w_y


def cca_max_corr(X, Y) -> CcaResult:
    X, Y = np.asarray(X, np.float64), np.asarray(Y, np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError(f"X {X.shape} and Y {Y.shape} must be (rows, T) with equal T")
    rho, w_x, w_y = canonical_correlation(X, Y)
    return CcaResult(float(rho), w_x, w_y)


def _check_segments(X: np.ndarray, bank: ReferenceBank) -> None:
    if X.shape[-1] != bank.n_samples:
        raise ValueError(f"segment has {X.shape[-1]} samples, reference bank {bank.n_samples}")


def cca_scores(X, bank: ReferenceBank) -> np.ndarray:
    """Canonical correlations of segments ``(n, C, T)`` with every class: ``(n, K)``."""
    X = np.asarray(X, np.float64)
    _check_segments(X, bank)
    return canonical_correlation(X[:, None], bank.refs[None], return_weights=False)


def cca_classify(X, bank: ReferenceBank) -> tuple[int, np.ndarray]:
    """Class with the largest canonical correlation (ties go to the lower id)."""
    X = np.asarray(X, np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a single (C, T) segment")
    rho = cca_scores(X[None], bank)[0]
    return int(np.argmax(rho)), rho
