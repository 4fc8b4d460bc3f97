"""Band-pass design, zero-phase filtering, decimation and segmentation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import load_frozen
from ssvepnet.signal import (
    EpochSpec,
    FilterDesignError,
    FilterSpec,
    SignalTooShortError,
    decimate,
    design_butterworth_bandpass,
    filtfilt,
    preprocess_trial,
    segment_epochs,
)

DEFAULT_SPEC = FilterSpec(9.0, 30.0, 4, 2048.0)


@pytest.fixture(scope="module")
def cascade():
    return design_butterworth_bandpass(DEFAULT_SPEC)


@pytest.fixture(scope="module")
def cascade256():
    return design_butterworth_bandpass(FilterSpec(9.0, 30.0, 4, 256.0))


def _sine(f, fs, seconds, phase=0.0):
    t = np.arange(int(round(fs * seconds))) / fs
    return np.sin(2 * np.pi * f * t + phase)


class TestFilterSpec:
    @pytest.mark.parametrize("kw", [
        {"order": 0}, {"order": 3}, {"low_cut_hz": 0.0}, {"low_cut_hz": 31.0},
        {"high_cut_hz": 1024.0}, {"high_cut_hz": 2000.0},
    ])
    def test_rejects_invalid(self, kw):
        with pytest.raises(FilterDesignError):
            FilterSpec(**kw)

    def test_center(self):
        assert DEFAULT_SPEC.center_hz == pytest.approx(np.sqrt(270.0))


class TestDesign:
    def test_two_stable_biquads(self, cascade):
        assert cascade.sos.shape == (2, 6)
        for row in cascade.sos:
            assert np.all(np.abs(np.roots(row[3:])) < 1.0)

    def test_matches_analytic_butterworth(self, cascade):
        frozen = load_frozen()["butterworth"]
        got = np.abs(cascade.response(frozen["freqs"]))
        want = np.asarray(frozen["magnitude"])
        # 1% of the magnitude, with an absolute floor deep in the stopband
        np.testing.assert_array_less(np.abs(got - want), 0.01 * np.maximum(want, 1e-3))

    def test_stopband_limits(self, cascade):
        h = np.abs(cascade.response([0.0, 1024.0]))
        np.testing.assert_allclose(h, 0.0, atol=1e-12)

    def test_center_gain(self, cascade):
        assert 0.99 <= abs(cascade.response([16.4])[0]) <= 1.01

    @pytest.mark.parametrize("edge", [9.0, 30.0])
    def test_minus_3db_edges(self, cascade, edge):
        assert 0.70 <= abs(cascade.response([edge])[0]) <= 0.71

    def test_edge_frequency_within_one_percent(self, cascade):
        f = np.linspace(5, 40, 35001)
        h = np.abs(cascade.response(f))
        above = f[h >= 1 / np.sqrt(2)]
        assert above[0] == pytest.approx(9.0, rel=0.01)
        assert above[-1] == pytest.approx(30.0, rel=0.01)


class TestFiltfilt:
    def test_zeros(self, cascade256):
        np.testing.assert_array_equal(filtfilt(cascade256, np.zeros(1024)), 0.0)

    def test_in_band_sine_passes_zero_phase(self, cascade256):
        x = _sine(15.0, 256.0, 4.0)
        y = filtfilt(cascade256, x)
        mid = slice(256, 768)
        amp = np.sqrt(2 * np.mean(y[mid] ** 2))
        assert 0.95 <= amp <= 1.05
        want = abs(cascade256.response([15.0])[0]) ** 2
        assert amp == pytest.approx(want, rel=0.01)
        lags = np.arange(-20, 21)
        xc = [np.dot(x[mid], np.roll(y, -k)[mid]) for k in lags]
        assert lags[int(np.argmax(xc))] == 0

    def test_out_of_band_sine_attenuated(self, cascade256):
        x = _sine(2.0, 256.0, 4.0)
        y = filtfilt(cascade256, x)
        assert np.sqrt(np.mean(y**2)) < 0.01 * np.sqrt(np.mean(x**2))

    def test_too_short(self, cascade256):
        with pytest.raises(SignalTooShortError):
            filtfilt(cascade256, np.ones(cascade256.padlen))

    def test_axis_handling(self, cascade256):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 512))
        y = filtfilt(cascade256, x, axis=-1)
        yt = filtfilt(cascade256, x.T, axis=0)
        np.testing.assert_allclose(y, yt.T, atol=1e-12)
        np.testing.assert_allclose(y[1], filtfilt(cascade256, x[1]), atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), a=st.floats(-5, 5), b=st.floats(-5, 5))
    def test_linear(self, cascade256, seed, a, b):
        rng = np.random.default_rng(seed)
        x, y = rng.standard_normal((2, 400))
        lhs = filtfilt(cascade256, a * x + b * y)
        rhs = a * filtfilt(cascade256, x) + b * filtfilt(cascade256, y)
        scale = max(np.abs(rhs).max(), 1e-300)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(scale, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_time_reversal(self, cascade256, seed):
        x = np.random.default_rng(seed).standard_normal(300)
        np.testing.assert_allclose(filtfilt(cascade256, x[::-1]), filtfilt(cascade256, x)[::-1],
                                   atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(f=st.floats(9.0, 30.0), phase=st.floats(0, 2 * np.pi))
    def test_in_band_peak_lag_zero(self, cascade256, f, phase):
        x = _sine(f, 256.0, 4.0, phase)
        y = filtfilt(cascade256, x)
        mid = slice(256, 768)
        lags = np.arange(-10, 11)
        xc = [np.dot(x[mid], np.roll(y, -k)[mid]) for k in lags]
        assert lags[int(np.argmax(xc))] == 0


class TestDecimate:
    def test_length(self):
        assert decimate(np.zeros(8192), 8).shape == (1024,)
        assert decimate(np.zeros(10), 3).shape == (4,)

    def test_constant(self):
        np.testing.assert_array_equal(decimate(np.full(64, 2.5), 8), 2.5)

    def test_picks_every_factor_sample(self):
        x = np.arange(40.0)
        np.testing.assert_array_equal(decimate(x, 8), x[::8])

    def test_sine_resamples_exactly(self):
        y = decimate(_sine(12.25, 2048.0, 4.0), 8)
        np.testing.assert_allclose(y, _sine(12.25, 256.0, 4.0), atol=1e-6)

    @pytest.mark.parametrize("factor", [0, -2, 1.5])
    def test_bad_factor(self, factor):
        with pytest.raises(ValueError):
            decimate(np.zeros(8), factor)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), factor=st.sampled_from([1, 2, 4, 8]))
    def test_commutes_with_segmentation(self, seed, factor):
        x = np.random.default_rng(seed).standard_normal((2, 4 * 32 * factor))
        full = EpochSpec(4.0, 1.0, 32.0 * factor)
        low = EpochSpec(4.0, 1.0, 32.0)
        a = [decimate(s.data, factor) for s in segment_epochs(x, full)]
        b = [s.data for s in segment_epochs(decimate(x, factor), low)]
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)


class TestSegmentation:
    def test_four_segments(self):
        x = np.random.default_rng(1).standard_normal((8, 1024))
        segs = segment_epochs(x, EpochSpec(4.0, 1.0, 256.0))
        assert [s.index for s in segs] == [0, 1, 2, 3]
        assert all(s.data.shape == (8, 256) for s in segs)
        np.testing.assert_array_equal(np.concatenate([s.data for s in segs], axis=1), x)

    def test_single_segment(self):
        segs = segment_epochs(np.zeros((8, 256)), EpochSpec(1.0, 1.0, 256.0))
        assert len(segs) == 1 and segs[0].index == 0

    def test_non_integer_count(self):
        with pytest.raises(ValueError):
            EpochSpec(4.0, 1.5, 256.0)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            segment_epochs(np.zeros((8, 1000)), EpochSpec(4.0, 1.0, 256.0))

    def test_preprocess_trial(self, cascade):
        x = np.tile(_sine(12.25, 2048.0, 4.0), (2, 1))
        segs = preprocess_trial(x, cascade, 8, EpochSpec(4.0, 1.0, 256.0))
        assert len(segs) == 4 and segs[0].data.shape == (2, 256)
        whole = np.concatenate([s.data for s in segs], axis=1)
        np.testing.assert_allclose(whole, decimate(filtfilt(cascade, x), 8))
