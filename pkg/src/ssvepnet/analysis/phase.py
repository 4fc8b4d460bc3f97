"""Per-segment phase and amplitude at the stimulus frequency.

The estimate is a least-squares fit of ``a*cos(2*pi*f*t) + b*sin(2*pi*f*t)``
over the segment, with ``t = 0`` at the first sample. A segment equal to
``A*cos(2*pi*f*t + phi)`` gives phase ``phi`` and amplitude ``A``. So a cosine
reads 0 degrees, and because the fitted phase is ``atan2(-b, a)`` a sine
reads 270 degrees. Consecutive 1 s windows of one continuous 12.25 Hz
sinusoid advance by +90 degrees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..datastore import Dataset

MIN_RESULTANT = 1e-9


@dataclass(frozen=True)
class PhaseAmp:
    phase_deg: float
    amplitude: float
    frequency: float
    channel: int = 0
    segment: int = 0

    def __post_init__(self):
        if not 0.0 <= self.phase_deg < 360.0:
            raise ValueError(f"phase {self.phase_deg} outside [0, 360)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")


def fit_sinusoid(x, f: float, fs: float):
    """Batched least-squares fit over the last axis; returns ``(phase_deg, amplitude)`` arrays."""
    if f >= fs / 2:
        raise ValueError(f"frequency {f} Hz is at or above Nyquist for fs={fs} Hz")
    if f <= 0:
        raise ValueError("frequency must be positive")
    x = np.asarray(x, np.float64)
    t = np.arange(x.shape[-1]) / fs
    B = np.stack([np.cos(2 * np.pi * f * t), np.sin(2 * np.pi * f * t)], axis=1)  # (T, 2)
    # normal equations; B'B is a symmetric 2x2
    coef = (x @ B) @ np.linalg.inv(B.T @ B)
    a, b = coef[..., 0], coef[..., 1]
    phase = np.degrees(np.arctan2(-b, a)) % 360.0
    # values that round up to exactly 360 wrap to 0
    phase = np.where(phase >= 360.0, 0.0, phase)
    return phase, np.hypot(a, b)


def estimate_phase_amplitude(x, f: float, fs: float, channel: int = 0,
                             segment: int = 0) -> PhaseAmp:
    x = np.asarray(x, np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single channel's samples")
    phase, amp = fit_sinusoid(x, f, fs)
    return PhaseAmp(float(phase), float(amp), float(f), channel, segment)


def circular_mean(phases_deg, weights=None):
    """``(mean_phase_deg or None, resultant_length)``; mean is ``None`` when the resultant vanishes."""
    ph = np.radians(np.asarray(phases_deg, np.float64))
    if ph.size == 0:
        return None, float("nan")
    z = np.average(np.exp(1j * ph), weights=weights)
    R = float(abs(z))
    if R < MIN_RESULTANT:
        return None, R
    return float(np.degrees(np.angle(z)) % 360.0), R


PHASE_COLUMNS = ("class_id", "frequency_hz", "channel", "segment", "n", "mean_phase_deg",
                 "resultant_length", "mean_amplitude", "amplitude_sem", "phase_sem_deg")


def segment_phase_report(ds: Dataset, n_segments: int | None = None) -> list[dict]:
    """Circular-mean phase and mean amplitude for every (class, channel, segment) cell.

    Each row follows :data:`PHASE_COLUMNS`. ``phase_sem_deg`` is the SEM of
    per-subject circular means (needs at least two subjects). Empty cells and
    cells whose resultant vanishes report ``None`` instead of a number.
    """
    K = ds.stimulus.n_classes
    S = int(ds.segment.max()) + 1 if n_segments is None and len(ds) else (n_segments or 0)
    rows = []
    for k in range(K):
        f = ds.stimulus.frequency(k)
        in_class = ds.class_id == k
        if in_class.any():
            phase, amp = fit_sinusoid(ds.data[in_class], f, ds.sample_rate_hz)  # (m, C)
        seg, subj = ds.segment[in_class], ds.subject[in_class]
        for c in range(ds.n_channels):
            for s in range(S):
                sel = seg == s
                n = int(sel.sum())
                row = dict(class_id=k, frequency_hz=f, channel=c, segment=s, n=n,
                           mean_phase_deg=None, resultant_length=None, mean_amplitude=None,
                           amplitude_sem=None, phase_sem_deg=None)
                if n:
                    mean, R = circular_mean(phase[sel, c])
                    a = amp[sel, c]
                    row.update(mean_phase_deg=mean, resultant_length=R, mean_amplitude=float(a.mean()),
                               amplitude_sem=float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else None)
                    row["phase_sem_deg"] = _subject_phase_sem(phase[sel, c], subj[sel], mean)
                rows.append(row)
    return rows


def _subject_phase_sem(phases, subjects, grand_mean):
    if grand_mean is None:
        return None
    means = [circular_mean(phases[subjects == s])[0] for s in np.unique(subjects)]
    means = [m for m in means if m is not None]
    if len(means) < 2:
        return None
    dev = (np.asarray(means) - grand_mean + 180.0) % 360.0 - 180.0
    return float(np.sqrt((dev**2).sum() / (len(dev) - 1)) / np.sqrt(len(dev)))
