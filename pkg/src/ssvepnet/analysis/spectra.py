"""Power spectra of the learned temporal kernels."""
from __future__ import annotations

import numpy as np


def kernel_spectrum(kernel, fs: float = 256.0):
    """One-sided power spectrum ``(freqs, power)`` of a real kernel.

    ``power`` is ``|DFT|**2`` with every bin strictly between DC and Nyquist
    doubled, so ``power.sum() == len(kernel) * (kernel**2).sum()``. The
    frequency resolution is ``fs / len(kernel)``. Works on the last axis, so
    a ``(F, K)`` stack gives ``(F, K//2 + 1)`` spectra.
    """
    k = np.asarray(kernel, np.float64)
    n = k.shape[-1]
    power = np.abs(np.fft.rfft(k, axis=-1)) ** 2
    last = power.shape[-1] - 1 if n % 2 == 0 else power.shape[-1]
    power[..., 1:last] *= 2.0
    return np.fft.rfftfreq(n, 1.0 / fs), power


def model_kernel_spectra(model, fs: float = 256.0):
    """Spectra of every first-layer temporal kernel: ``(freqs, (F1, K//2+1))``."""
    return kernel_spectrum(model.params["conv1"][:, 0, 0, :], fs)


def band_concentration(freqs, power, targets, band=(9.0, 30.0), halfwidth: float = 1.0):
    """Per-kernel share of in-band power lying within ``halfwidth`` Hz of any target frequency."""
    freqs = np.asarray(freqs)
    in_band = (freqs >= band[0]) & (freqs <= band[1])
    near = np.zeros_like(in_band)
    for f in targets:
        near |= np.abs(freqs - f) <= halfwidth
    total = power[..., in_band].sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        share = power[..., in_band & near].sum(axis=-1) / total
    return np.where(total > 0, share, 0.0)
