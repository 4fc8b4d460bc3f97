"""Stimulus table and the ground-truth synthetic generator."""
import numpy as np
import pytest

from ssvepnet.analysis import fit_sinusoid
from ssvepnet.stimulus import StimulusTable
from ssvepnet.synthgen import (
    SynthConfig,
    clean_signal,
    generate_dataset,
    generate_trial,
    subject_gains,
    trial_rng,
)


class TestStimulusTable:
    def test_standard_table(self):
        s = StimulusTable.standard()
        assert s.n_classes == 12
        np.testing.assert_allclose(s.frequencies, 9.25 + 0.5 * np.arange(12))

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            StimulusTable((10.0, 9.0), (0.0, 0.0))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            StimulusTable((10.0, 11.0), (0.0,))

    def test_unknown_class(self):
        s = StimulusTable.standard()
        with pytest.raises(KeyError):
            s.frequency(12)
        with pytest.raises(KeyError):
            s.phase(-1)

    def test_json_round_trip(self):
        s = StimulusTable.standard()
        assert StimulusTable.from_json(s.to_json()) == s


class TestConfig:
    @pytest.mark.parametrize("kw", [{"channels": 0}, {"trials_per_class": 0}, {"subjects": 0},
                                    {"harmonic_gain": 2.0}, {"sample_rate_hz": 50.0}])
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            SynthConfig(**kw)

    def test_json_round_trip(self):
        cfg = SynthConfig(snr_db=3.0, subjects=2)
        assert SynthConfig.from_json(cfg.to_json()) == cfg


class TestTrial:
    def _cfg(self, **kw):
        return SynthConfig(subjects=1, trials_per_class=1, **kw)

    def test_deterministic(self):
        cfg = self._cfg()
        a = generate_trial(cfg, 0, 5, trial_rng(cfg, 0, 0, 5))
        b = generate_trial(cfg, 0, 5, trial_rng(cfg, 0, 0, 5))
        np.testing.assert_array_equal(a, b)

    def test_unknown_class(self):
        cfg = self._cfg()
        with pytest.raises(KeyError):
            generate_trial(cfg, 0, 12, trial_rng(cfg, 0, 0, 0))

    def test_dominant_bin(self):
        cfg = self._cfg(snr_db=60.0)
        k = 6  # 12.25 Hz
        x = generate_trial(cfg, 0, k, trial_rng(cfg, 0, 0, k))
        freqs = np.fft.rfftfreq(x.shape[1], 1 / cfg.sample_rate_hz)
        peaks = freqs[np.argmax(np.abs(np.fft.rfft(x, axis=1)), axis=1)]
        np.testing.assert_allclose(peaks, 12.25)

    def test_harmonic_power_ratio(self):
        cfg = self._cfg(snr_db=60.0, harmonic_gain=0.5)
        x = generate_trial(cfg, 0, 6, trial_rng(cfg, 0, 0, 6))
        spec = np.abs(np.fft.rfft(x, axis=1)) ** 2
        freqs = np.fft.rfftfreq(x.shape[1], 1 / cfg.sample_rate_hz)
        p1 = spec[:, np.isclose(freqs, 12.25)].sum()
        p2 = spec[:, np.isclose(freqs, 24.5)].sum()
        assert p2 / p1 == pytest.approx(0.25, rel=0.05)

    def test_snr_in_band(self):
        cfg = self._cfg(snr_db=0.0)
        k = 3
        noisy = generate_trial(cfg, 0, k, trial_rng(cfg, 0, 0, k))
        clean = subject_gains(cfg, 0)[:, None] * clean_signal(cfg, k)[None]
        noise = noisy - clean
        freqs = np.fft.rfftfreq(noise.shape[1], 1 / cfg.sample_rate_hz)
        band = (freqs >= 9) & (freqs <= 30)
        ps = (np.abs(np.fft.rfft(clean, axis=1)) ** 2)[:, band].sum()
        pn = (np.abs(np.fft.rfft(noise, axis=1)) ** 2)[:, band].sum()
        assert 10 * np.log10(ps / pn) == pytest.approx(0.0, abs=0.5)

    def test_phase_continuity(self):
        # segment s+1 of the trial is the segment-0 waveform advanced by 2*pi*f seconds of phase
        cfg = self._cfg(harmonic_gain=0.0)
        n = int(cfg.sample_rate_hz)
        t = np.arange(n) / cfg.sample_rate_hz
        for k in cfg.stimulus.class_ids:
            f, phi = cfg.stimulus.frequency(k), cfg.stimulus.phase(k)
            x = clean_signal(cfg, k)
            for s in range(4):
                want = np.cos(2 * np.pi * f * t + phi + 2 * np.pi * f * s)
                np.testing.assert_allclose(x[s * n:(s + 1) * n], want, atol=1e-9)

    @pytest.mark.parametrize("k", range(12))
    def test_least_squares_phase_advance(self, k):
        cfg = SynthConfig(subjects=1, trials_per_class=1, harmonic_gain=0.0)
        x = clean_signal(cfg, k)
        fs, f = cfg.sample_rate_hz, cfg.stimulus.frequency(k)
        segs = x.reshape(4, -1)
        phase_deg, _ = fit_sinusoid(segs, f, fs)
        want = np.mod(np.degrees(cfg.stimulus.phase(k) + 2 * np.pi * f * np.arange(4)), 360)
        diff = np.angle(np.exp(1j * np.radians(phase_deg - want)))
        np.testing.assert_array_less(np.abs(diff), 1e-6)


class TestDataset:
    def test_counts_and_balance(self):
        ds = generate_dataset(SynthConfig(subjects=2, trials_per_class=2))
        assert len(ds) == 48
        np.testing.assert_array_equal(np.bincount(ds.class_id), 4)
        assert ds.data.shape == (48, 8, 8192)

    def test_single(self):
        assert len(generate_dataset(SynthConfig(subjects=1, trials_per_class=1))) == 12

    def test_standard_protocol_count(self):
        cfg = SynthConfig()
        assert cfg.subjects * cfg.trials_per_class * cfg.stimulus.n_classes == 1800

    def test_order_independent(self):
        cfg = SynthConfig(subjects=2, trials_per_class=1)
        ds = generate_dataset(cfg)
        i = 17
        direct = generate_trial(cfg, int(ds.subject[i]), int(ds.class_id[i]),
                                trial_rng(cfg, int(ds.subject[i]), int(ds.block[i]), int(ds.class_id[i])))
        np.testing.assert_array_equal(ds.data[i], direct.astype(np.float32))

    def test_subject_gain_variability(self):
        cfg = SynthConfig()
        assert not np.allclose(subject_gains(cfg, 0), subject_gains(cfg, 1))
        np.testing.assert_array_equal(subject_gains(cfg, 3), subject_gains(cfg, 3))
