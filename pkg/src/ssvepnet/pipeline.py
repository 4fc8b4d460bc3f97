"""Dataset-level preprocessing: filter, decimate and segment every trial."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .datastore import Dataset
from .signal import EpochSpec, FilterSpec, design_butterworth_bandpass, preprocess_trial
from .synthgen import SynthConfig, generate_trial, trial_rng


@dataclass(frozen=True)
class PreprocessConfig:
    low_cut_hz: float = 9.0
    high_cut_hz: float = 30.0
    order: int = 4
    target_rate_hz: float = 256.0
    segment_seconds: float = 1.0

    def decimation_factor(self, source_rate_hz: float) -> int:
        factor = source_rate_hz / self.target_rate_hz
        if factor < 1 or abs(factor - round(factor)) > 1e-9:
            raise ValueError(
                f"source rate {source_rate_hz} Hz is not an integer multiple of {self.target_rate_hz} Hz"
            )
        return int(round(factor))

    def to_json(self) -> dict:
        return asdict(self)


def is_preprocessed(ds: Dataset, config: PreprocessConfig) -> bool:
    return (ds.sample_rate_hz == config.target_rate_hz
            and ds.n_samples == round(config.segment_seconds * config.target_rate_hz))


def _plan(n_samples: int, fs: float, config: PreprocessConfig):
    factor = config.decimation_factor(fs)
    cascade = design_butterworth_bandpass(
        FilterSpec(config.low_cut_hz, config.high_cut_hz, config.order, fs))
    n_out = -(-n_samples // factor)
    epoch = EpochSpec(n_out / config.target_rate_hz, config.segment_seconds, config.target_rate_hz)
    return cascade, factor, epoch


def preprocess_dataset(ds: Dataset, config: PreprocessConfig = PreprocessConfig()) -> Dataset:
    """Band-pass, decimate and cut each trial into segments.

    Each output segment keeps its parent's subject, class and block and gets
    its 0-based position in the trial as ``segment``.
    """
    if len(ds) == 0:
        n_seg = round(config.segment_seconds * config.target_rate_hz)
        return Dataset(np.zeros((0, ds.n_channels, n_seg), np.float32), [], [], [], [],
                       config.target_rate_hz, ds.channel_names, ds.stimulus, ds.provenance)
    cascade, factor, epoch = _plan(ds.n_samples, ds.sample_rate_hz, config)
    S = epoch.n_segments
    n = len(ds) * S
    out = np.empty((n, ds.n_channels, epoch.segment_samples), np.float32)
    for i in range(len(ds)):
        for seg in preprocess_trial(ds.data[i].astype(np.float64), cascade, factor, epoch):
            out[i * S + seg.index] = seg.data
    rep = lambda a: np.repeat(a, S)  # noqa: E731
    return Dataset(out, rep(ds.subject), rep(ds.class_id), rep(ds.block),
                   np.tile(np.arange(S), len(ds)), config.target_rate_hz,
                   ds.channel_names, ds.stimulus,
                   (ds.provenance + "; " if ds.provenance else "")
                   + f"bandpass {config.low_cut_hz:g}-{config.high_cut_hz:g} Hz order {config.order}, "
                     f"decimated x{factor}, {config.segment_seconds:g} s segments")


def synthesize_preprocessed(synth: SynthConfig,
                            config: PreprocessConfig = PreprocessConfig()) -> Dataset:
    """Generate and preprocess trial by trial, without holding raw trials.

    Output is identical to ``preprocess_dataset(generate_dataset(synth))``.
    """
    cascade, factor, epoch = _plan(synth.n_samples, synth.sample_rate_hz, config)
    K, S = synth.stimulus.n_classes, epoch.n_segments
    n = synth.subjects * synth.trials_per_class * K * S
    out = np.empty((n, synth.channels, epoch.segment_samples), np.float32)
    meta = np.empty((n, 4), np.int64)
    i = 0
    for s in range(synth.subjects):
        for b in range(synth.trials_per_class):
            for k in range(K):
                raw = generate_trial(synth, s, k, trial_rng(synth, s, b, k))
                # round through float32 exactly as a stored raw dataset would
                raw = raw.astype(np.float32).astype(np.float64)
                for seg in preprocess_trial(raw, cascade, factor, epoch):
                    out[i] = seg.data
                    meta[i] = s, k, b, seg.index
                    i += 1
    return Dataset(out, *meta.T, sample_rate_hz=config.target_rate_hz,
                   channel_names=[f"ch{c}" for c in range(synth.channels)],
                   stimulus=synth.stimulus,
                   provenance=f"synthetic snr_db={synth.snr_db} seed={synth.rng_seed}; "
                              f"bandpass {config.low_cut_hz:g}-{config.high_cut_hz:g} Hz order "
                              f"{config.order}, decimated x{factor}, {config.segment_seconds:g} s segments")
