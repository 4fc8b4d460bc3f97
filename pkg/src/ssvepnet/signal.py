"""Preprocessing chain: Butterworth band-pass design, zero-phase filtering,
decimation and epoch segmentation.

All arithmetic here is float64. Conversion to float32 happens only when data
is handed to the network.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal as sps


class FilterDesignError(ValueError):
    pass


class SignalTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class FilterSpec:
    low_cut_hz: float = 9.0
    high_cut_hz: float = 30.0
    order: int = 4
    sample_rate_hz: float = 2048.0

    def __post_init__(self):
        if self.order < 1:
            raise FilterDesignError(f"order must be >= 1, got {self.order}")
        if self.order % 2:
            raise FilterDesignError("band-pass order must be even (two poles per prototype pole)")
        nyq = self.sample_rate_hz / 2.0
        if not 0.0 < self.low_cut_hz < self.high_cut_hz < nyq:
            raise FilterDesignError(
                f"need 0 < low ({self.low_cut_hz}) < high ({self.high_cut_hz}) < Nyquist ({nyq})"
            )

    @property
    def center_hz(self) -> float:
        return float(np.sqrt(self.low_cut_hz * self.high_cut_hz))


@dataclass(frozen=True)
class BiquadCascade:
    """Second-order sections, one row per biquad: ``b0 b1 b2 1 a1 a2``."""

    sos: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        sos = np.asarray(self.sos, dtype=np.float64)
        if sos.ndim != 2 or sos.shape[1] != 6:
            raise FilterDesignError(f"sos must have shape (n, 6), got {sos.shape}")
        if not np.allclose(sos[:, 3], 1.0):
            raise FilterDesignError("sections must be normalised so that a0 == 1")
        for a1, a2 in sos[:, 4:6]:
            if np.any(np.abs(np.roots([1.0, a1, a2])) >= 1.0):
                raise FilterDesignError("unstable section: pole on or outside the unit circle")
        object.__setattr__(self, "sos", sos)

    @property
    def sections(self) -> list[tuple[float, float, float, float, float]]:
        """Coefficient sets as ``(b0, b1, b2, a1, a2)``."""
        return [(b0, b1, b2, a1, a2) for b0, b1, b2, _, a1, a2 in self.sos.tolist()]

    @property
    def order(self) -> int:
        return 2 * len(self.sos)

    @property
    def padlen(self) -> int:
        return 3 * (2 * self.order + 1)

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response at the given frequencies."""
        freqs_hz = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
        z = np.exp(-2j * np.pi * freqs_hz / self.sample_rate_hz)
        h = np.ones_like(z)
        for b0, b1, b2, _, a1, a2 in self.sos:
            h *= (b0 + b1 * z + b2 * z**2) / (1.0 + a1 * z + a2 * z**2)
        return h


def design_butterworth_bandpass(spec: FilterSpec) -> BiquadCascade:
    """Digital Butterworth band-pass of total order ``spec.order``.

    The band edges are pre-warped for the bilinear transform, so the -3 dB
    points land exactly on ``low_cut_hz`` and ``high_cut_hz``.
    """
    sos = sps.butter(
        spec.order // 2,
        [spec.low_cut_hz, spec.high_cut_hz],
        btype="bandpass",
        output="sos",
        fs=spec.sample_rate_hz,
    )
    cascade = BiquadCascade(sos=sos, sample_rate_hz=spec.sample_rate_hz)
    g = abs(cascade.response(spec.center_hz)[0])
    if not 0.5 <= g <= 1.5:
        raise FilterDesignError(f"centre-frequency gain {g:.3f} outside [0.5, 1.5]")
    return cascade


def _odd_extend(x: np.ndarray, n: int, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, -1)
    left = 2 * x[..., :1] - x[..., n:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-n - 2:-1]
    return np.moveaxis(np.concatenate([left, x, right], axis=-1), -1, axis)


def filtfilt(cascade: BiquadCascade, x, axis: int = -1) -> np.ndarray:
    """Zero-phase filtering with odd-reflection edge padding.

    The net response is zero-phase with magnitude ``|H|**2``. Each pass starts
    from the steady-state section state scaled to the first sample it sees,
    and both pass orders are averaged so that filtering a reversed signal
    gives exactly the reversed output.

    Raises:
        SignalTooShortError: if the signal is not longer than the pad length.
    """
    x = np.asarray(x, dtype=np.float64)
    n = cascade.padlen
    if x.shape[axis] <= n:
        raise SignalTooShortError(
            f"signal length {x.shape[axis]} must exceed the edge pad of {n} samples"
        )
    ext = _odd_extend(x, n, axis)
    zi = sps.sosfilt_zi(cascade.sos)  # (sections, 2)

    def _pass(sig):
        first = np.take(sig, [0], axis=axis)
        out, _ = sps.sosfilt(cascade.sos, sig, axis=axis, zi=_broadcast_zi(zi, first, axis))
        return out

    def _rev(sig):
        return np.flip(sig, axis=axis)

    # forward-then-backward and backward-then-forward averaged: exact
    # time-reversal symmetry, still zero phase with |H|**2 magnitude
    fb = _rev(_pass(_rev(_pass(ext))))
    bf = _pass(_rev(_pass(_rev(ext))))
    y = 0.5 * (fb + bf)
    idx = [slice(None)] * y.ndim
    idx[axis] = slice(n, y.shape[axis] - n)
    return y[tuple(idx)]


def _broadcast_zi(zi: np.ndarray, first: np.ndarray, axis: int) -> np.ndarray:
    # sosfilt wants zi shaped (sections, ..., 2, ...) with the 2 on `axis`
    nd = first.ndim
    axis = axis % nd
    shape = [zi.shape[0]] + list(first.shape)
    shape[axis + 1] = 2
    zi_b = zi.reshape([zi.shape[0]] + [1] * axis + [2] + [1] * (nd - axis - 1))
    return np.broadcast_to(zi_b, shape) * first[np.newaxis]


def decimate(x, factor: int, axis: int = -1) -> np.ndarray:
    """Keep every ``factor``-th sample starting at sample 0.

    No anti-alias filter is applied; the caller band-limits first.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"decimation factor must be a positive integer, got {factor}")
    x = np.asarray(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(None, None, int(factor))
    return x[tuple(idx)]


@dataclass(frozen=True)
class EpochSpec:
    trial_seconds: float = 4.0
    segment_seconds: float = 1.0
    sample_rate_hz: float = 256.0

    def __post_init__(self):
        ratio = self.trial_seconds / self.segment_seconds
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"trial length {self.trial_seconds}s is not a multiple of {self.segment_seconds}s"
            )
        seg = self.segment_seconds * self.sample_rate_hz
        if abs(seg - round(seg)) > 1e-9:
            raise ValueError("segment length is not an integer number of samples")

    @property
    def n_segments(self) -> int:
        return int(round(self.trial_seconds / self.segment_seconds))

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_seconds * self.sample_rate_hz))

    @property
    def trial_samples(self) -> int:
        return self.n_segments * self.segment_samples


class Segment(NamedTuple):
    index: int
    data: np.ndarray


def segment_epochs(trial, spec: EpochSpec) -> list[Segment]:
    """Cut a ``C x T_full`` trial into contiguous, non-overlapping segments."""
    trial = np.asarray(trial)
    if trial.ndim != 2:
        raise ValueError(f"trial must be 2-D (channels x samples), got shape {trial.shape}")
    if trial.shape[1] != spec.trial_samples:
        raise ValueError(
            f"trial has {trial.shape[1]} samples; expected {spec.trial_samples} "
            f"({spec.n_segments} x {spec.segment_samples})"
        )
    L = spec.segment_samples
    return [Segment(s, trial[:, s * L:(s + 1) * L]) for s in range(spec.n_segments)]


def preprocess_trial(trial, cascade: BiquadCascade, factor: int, spec: EpochSpec) -> list[Segment]:
    """Band-pass, decimate and segment one ``C x T_full`` trial."""
    y = filtfilt(cascade, trial, axis=-1)
    return segment_epochs(decimate(y, factor, axis=-1), spec)
