"""Sinusoidal reference bank and canonical correlation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_cca, cca_instances, load_frozen
from ssvepnet.cca import (
    build_reference_bank,
    canonical_correlation,
    cca_classify,
    cca_max_corr,
    cca_scores,
)
from ssvepnet.stimulus import StimulusTable


@pytest.fixture(scope="module")
def bank():
    return build_reference_bank(StimulusTable.standard(), 2, 256, 256.0)


def _corr(a, b):
    a, b = a - a.mean(), b - b.mean()
    return abs(a @ b) / np.sqrt((a @ a) * (b @ b))


class TestReferenceBank:
    def test_shape(self, bank):
        assert bank.refs.shape == (12, 4, 256)

    def test_row_order(self, bank):
        t = np.arange(256) / 256.0
        f = bank.frequencies[3]
        np.testing.assert_allclose(bank[3][0], np.sin(2 * np.pi * f * t))
        np.testing.assert_allclose(bank[3][1], np.cos(2 * np.pi * f * t))
        np.testing.assert_allclose(bank[3][2], np.sin(2 * np.pi * 2 * f * t))
        np.testing.assert_allclose(bank[3][3], np.cos(2 * np.pi * 2 * f * t))

    def test_first_sample(self, bank):
        np.testing.assert_array_equal(bank.refs[:, 0::2, 0], 0.0)
        np.testing.assert_array_equal(bank.refs[:, 1::2, 0], 1.0)

    def test_half_second_integer_half_cycles(self):
        b = build_reference_bank(StimulusTable((10.0,), (0.0,)), 1, 256, 256.0)
        assert abs(b[0][0][128]) < 1e-12

    def test_zero_mean_over_integer_cycles(self):
        # 4 Hz over 1 s and 8 Hz over 1 s: whole cycles
        b = build_reference_bank(StimulusTable((4.0, 8.0), (0.0, 0.0)), 3, 256, 256.0)
        np.testing.assert_array_less(np.abs(b.refs.mean(axis=-1)), 1e-3)

    def test_aliasing_rejected(self):
        with pytest.raises(ValueError):
            build_reference_bank(StimulusTable.standard(), 9, 256, 256.0)

    def test_harmonics_positive(self):
        with pytest.raises(ValueError):
            build_reference_bank(StimulusTable.standard(), 0, 256, 256.0)


class TestMaxCorr:
    def test_self(self):
        X = np.random.default_rng(0).standard_normal((3, 100))
        assert cca_max_corr(X, X.copy()).rho == pytest.approx(1.0, abs=1e-8)

    def test_sine_against_reference(self, bank):
        t = np.arange(256) / 256.0
        X = np.sin(2 * np.pi * 10.0 * t)[None]
        b = build_reference_bank(StimulusTable((10.0,), (0.0,)), 2, 256, 256.0)
        assert cca_max_corr(X, b[0]).rho >= 0.999

    def test_weights_reproduce_rho(self):
        rng = np.random.default_rng(1)
        X, Y = rng.standard_normal((4, 256)), rng.standard_normal((4, 256))
        r = cca_max_corr(X, Y)
        assert _corr(r.w_x @ X, r.w_y @ Y) == pytest.approx(r.rho, abs=1e-8)
        assert r.rho <= 1 + 1e-8

    def test_white_noise_four_by_four_against_brute_force(self):
        # coarser oracle: random search over 4-D directions never beats the solver
        rng = np.random.default_rng(2)
        X, Y = rng.standard_normal((4, 256)), rng.standard_normal((4, 256))
        rho = cca_max_corr(X, Y).rho
        U = rng.standard_normal((20000, 4))
        V = rng.standard_normal((20000, 4))
        Xc, Yc = X - X.mean(1, keepdims=True), Y - Y.mean(1, keepdims=True)
        a, b = U @ Xc, V @ Yc
        c = np.abs((a * b).sum(1)) / np.sqrt((a * a).sum(1) * (b * b).sum(1))
        assert c.max() <= rho + 1e-12

    def test_frozen_brute_force(self):
        frozen = load_frozen()["cca_brute_force"]
        got = [cca_max_corr(X, Y).rho for X, Y in cca_instances()]
        np.testing.assert_allclose(got, frozen, atol=1e-3)

    def test_brute_force_live_small(self):
        rng = np.random.default_rng(11)
        X, Y = rng.standard_normal((2, 60)), rng.standard_normal((3, 60))
        assert cca_max_corr(X, Y).rho == pytest.approx(brute_force_cca(X, Y), abs=1e-3)

    def test_constant_rejected(self):
        with pytest.raises(ValueError):
            cca_max_corr(np.ones((2, 50)), np.random.default_rng(0).standard_normal((2, 50)))

    def test_rank_deficient_ok(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(100)
        X = np.stack([x, x, 2 * x])
        Y = rng.standard_normal((2, 100))
        Y[0] += x
        r = cca_max_corr(X, Y)
        assert np.isfinite(r.rho) and 0 <= r.rho <= 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cca_max_corr(np.zeros((2, 10)), np.zeros((2, 11)))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31),
           a=st.floats(0.01, 100) | st.floats(-100, -0.01),
           b=st.floats(0.01, 100) | st.floats(-100, -0.01))
    def test_scale_invariance(self, seed, a, b):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((3, 80)), rng.standard_normal((2, 80))
        assert cca_max_corr(a * X, b * Y).rho == pytest.approx(cca_max_corr(X, Y).rho, abs=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_mixing_invariance(self, seed):
        rng = np.random.default_rng(seed)
        X, Y = rng.standard_normal((3, 80)), rng.standard_normal((4, 80))
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        M = q @ np.diag(rng.uniform(0.5, 2.0, 3))  # condition number <= 4
        assert cca_max_corr(M @ X, Y).rho == pytest.approx(cca_max_corr(X, Y).rho, abs=1e-6)

    def test_batched_matches_single(self):
        rng = np.random.default_rng(4)
        X, Y = rng.standard_normal((5, 3, 64)), rng.standard_normal((5, 2, 64))
        batch = canonical_correlation(X, Y, return_weights=False)
        single = [cca_max_corr(x, y).rho for x, y in zip(X, Y)]
        np.testing.assert_allclose(batch, single, atol=1e-12)


class TestClassify:
    def test_noise_free_segment(self, bank, clean_segments):
        idx = np.flatnonzero(clean_segments.class_id == 6)[:4]
        for i in idx:
            k, rho = cca_classify(clean_segments.data[i], bank)
            assert k == 6 and rho[k] >= 0.999

    def test_high_snr_accuracy(self, bank, high_snr_segments):
        pred = cca_scores(high_snr_segments.data, bank).argmax(1)
        assert np.mean(pred == high_snr_segments.class_id) >= 0.95

    def test_noise_is_total(self, bank):
        X = np.random.default_rng(5).uniform(-1, 1, (8, 256))
        k, rho = cca_classify(X, bank)
        assert 0 <= k < 12 and np.all(np.isfinite(rho))
        assert np.all((rho >= 0) & (rho <= 1))

    def test_ties_go_low(self, bank):
        X = np.random.default_rng(6).standard_normal((8, 256))
        rho = cca_scores(X[None], bank)[0]
        assert int(np.argmax(np.full_like(rho, rho.max()))) == 0

    def test_length_mismatch(self, bank):
        with pytest.raises(ValueError):
            cca_classify(np.zeros((8, 200)), bank)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), power=st.floats(0.2, 5.0))
    def test_monotone_transform_keeps_decision(self, bank, seed, power):
        X = np.random.default_rng(seed).standard_normal((8, 256))
        k, rho = cca_classify(X, bank)
        for g in (np.exp, lambda r: r**power, lambda r: np.log(r + 1e-12), lambda r: 3 * r - 7):
            assert int(np.argmax(g(rho))) == k
