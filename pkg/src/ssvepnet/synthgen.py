"""Ground-truth synthetic SSVEP recordings.

Each trial is a per-channel gain times a cosine at the class frequency
(with the class stimulus phase) plus a second harmonic, buried in white
Gaussian noise. The noise level is set so that the ratio of signal power to
noise power inside the 9-30 Hz band equals ``snr_db``.

Randomness is counter-based: every trial draws from its own generator keyed
by ``(rng_seed, subject, block, class_id)``, so generation order and
parallelism never change the output.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .datastore import Dataset
from .stimulus import StimulusTable

SNR_BAND_HZ = (9.0, 30.0)
_TRIAL_STREAM = 1
_GAIN_STREAM = 2


@dataclass(frozen=True)
class SynthConfig:
    stimulus: StimulusTable = field(default_factory=StimulusTable.standard)
    channels: int = 8
    sample_rate_hz: float = 2048.0
    trial_seconds: float = 4.0
    trials_per_class: int = 15
    subjects: int = 10
    snr_db: float = 0.0
    harmonic_gain: float = 0.5
    rng_seed: int = 0
    # log-normal spread of each subject's channel gains around the shared pattern
    subject_gain_spread: float = 0.25

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.trials_per_class < 1:
            raise ValueError("trials_per_class must be >= 1")
        if self.subjects < 1:
            raise ValueError("subjects must be >= 1")
        if not 0.0 <= self.harmonic_gain <= 1.0:
            raise ValueError("harmonic_gain must lie in [0, 1]")
        if self.sample_rate_hz <= 2 * SNR_BAND_HZ[1]:
            raise ValueError("sample rate too low for the 9-30 Hz SNR band")
        if self.subject_gain_spread < 0:
            raise ValueError("subject_gain_spread must be >= 0")
        n = self.trial_seconds * self.sample_rate_hz
        if abs(n - round(n)) > 1e-9 or n < 1:
            raise ValueError("trial_seconds * sample_rate_hz must be a positive integer")

    @property
    def n_samples(self) -> int:
        return int(round(self.trial_seconds * self.sample_rate_hz))

    def to_json(self) -> dict:
        d = asdict(self)
        d["stimulus"] = self.stimulus.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "stimulus" in d and not isinstance(d["stimulus"], StimulusTable):
            d["stimulus"] = StimulusTable.from_json(d["stimulus"])
        return cls(**d)


def trial_rng(config: SynthConfig, subject: int, block: int, class_id: int) -> np.random.Generator:
    return np.random.default_rng([config.rng_seed, _TRIAL_STREAM, subject, block, class_id])


def subject_gains(config: SynthConfig, subject: int) -> np.ndarray:
    """Channel gains of one subject: shared pattern times log-normal jitter."""
    base = np.random.default_rng([config.rng_seed, _GAIN_STREAM]).uniform(0.5, 1.0, config.channels)
    jitter = np.random.default_rng([config.rng_seed, _GAIN_STREAM, subject]).standard_normal(config.channels)
    return base * np.exp(config.subject_gain_spread * jitter)


def clean_signal(config: SynthConfig, class_id: int, n_samples: int | None = None) -> np.ndarray:
    """Noise-free unit-gain waveform of one class, length ``n_samples``."""
    f = config.stimulus.frequency(class_id)
    phi = config.stimulus.phase(class_id)
    n = config.n_samples if n_samples is None else n_samples
    t = np.arange(n) / config.sample_rate_hz
    # cosine form: the least-squares phase of segment s is phi + 2*pi*f*s exactly
    return np.cos(2 * np.pi * f * t + phi) + config.harmonic_gain * np.cos(2 * np.pi * 2 * f * t + 2 * phi)


def noise_std(config: SynthConfig, gains: np.ndarray, class_id: int) -> float:
    """White-noise standard deviation giving ``snr_db`` inside the SNR band."""
    lo, hi = SNR_BAND_HZ
    f = config.stimulus.frequency(class_id)
    comps = [(f, 1.0), (2 * f, config.harmonic_gain)]
    per_unit = sum(0.5 * a**2 for fk, a in comps if lo <= fk <= hi)
    p_signal = float(np.mean(gains**2)) * per_unit
    if p_signal == 0.0:
        raise ValueError("no signal component inside the SNR band")
    band_fraction = (hi - lo) / (config.sample_rate_hz / 2)
    p_noise_band = p_signal / 10 ** (config.snr_db / 10)
    return float(np.sqrt(p_noise_band / band_fraction))


def generate_trial(config: SynthConfig, subject: int, class_id: int,
                   rng: np.random.Generator) -> np.ndarray:
    """One ``channels x n_samples`` float64 trial."""
    config.stimulus.frequency(class_id)  # raises KeyError on unknown class
    gains = subject_gains(config, subject)
    x = gains[:, None] * clean_signal(config, class_id)[None, :]
    sigma = noise_std(config, gains, class_id)
    return x + sigma * rng.standard_normal(x.shape)


def generate_dataset(config: SynthConfig) -> Dataset:
    """``subjects x trials_per_class x K`` trials ordered by subject, block, class."""
    K = config.stimulus.n_classes
    n = config.subjects * config.trials_per_class * K
    data = np.empty((n, config.channels, config.n_samples), np.float32)
    meta = np.empty((n, 3), np.int64)
    i = 0
    for s in range(config.subjects):
        for b in range(config.trials_per_class):
            for k in range(K):
                data[i] = generate_trial(config, s, k, trial_rng(config, s, b, k))
                meta[i] = s, k, b
                i += 1
    return Dataset(
        data, meta[:, 0], meta[:, 1], meta[:, 2], np.zeros(n, np.int64),
        sample_rate_hz=config.sample_rate_hz,
        channel_names=[f"ch{c}" for c in range(config.channels)],
        stimulus=config.stimulus,
        provenance=f"synthetic snr_db={config.snr_db} seed={config.rng_seed}",
    )
