import csv
import warnings

import numpy as np
import pytest

from vaenmf.config import EnhanceConfig, McmcConfig, PriorConfig, StftConfig
from vaenmf.enhance import enhance, wiener_filter, write_diagnostics
from vaenmf.errors import ConfigError, DataError, NonFiniteError, ShapeError
from vaenmf.signal_io import SampleBuffer, stft
from vaenmf.vae import init_vae

SMALL = StftConfig(64, 16)
FAST = McmcConfig(burn_in=5, samples=5, seed=2)


def _model(seed=0):
    return init_vae(SMALL.n_freqs, 3, (8,), np.random.default_rng(seed))


def _signal(n=2000, seed=0, rate=16000):
    return SampleBuffer(0.1 * np.random.default_rng(seed).standard_normal(n), rate)


class TestWienerFilter:
    def test_noiseless_limit(self):
        X = stft(_signal(), SMALL)
        out, mask = wiener_filter(X, np.ones(X.shape), np.zeros(X.shape))
        np.testing.assert_array_equal(mask, 1.0)
        np.testing.assert_array_equal(out.bins, X.bins)

    def test_equal_variances(self):
        X = stft(_signal(), SMALL)
        v = np.random.default_rng(0).gamma(1.0, 1.0, X.shape)
        _, mask = wiener_filter(X, v, v)
        np.testing.assert_allclose(mask, 0.5, rtol=1e-15)

    def test_magnitude_and_phase(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((9, 7)) + 1j * rng.standard_normal((9, 7))
        out, mask = wiener_filter(X, rng.gamma(1, 1, X.shape), rng.gamma(1, 1, X.shape))
        assert np.all((mask > 0) & (mask <= 1))
        assert np.all(np.abs(out) <= np.abs(X))
        np.testing.assert_allclose(np.angle(out), np.angle(X), atol=1e-15)
        np.testing.assert_array_equal(out, mask * X)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            wiener_filter(np.ones((3, 3)), np.ones((3, 2)), np.ones((3, 3)))

    def test_non_finite(self):
        v = np.ones((2, 2))
        bad = v.copy()
        bad[0, 1] = np.nan
        with pytest.raises(NonFiniteError):
            wiener_filter(np.ones((2, 2)), bad, v)

    def test_zero_denominator(self):
        with pytest.raises(DataError):
            wiener_filter(np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))


class TestEnhance:
    def test_output_contract(self):
        noisy = _signal()
        result = enhance(noisy, _model(), PriorConfig(n_bases=2), FAST, SMALL)
        assert len(result.enhanced) == len(noisy)
        assert result.enhanced.sample_rate == noisy.sample_rate
        assert np.all(np.isfinite(result.enhanced.samples))
        assert np.all((result.wiener_mask > 0) & (result.wiener_mask <= 1))
        assert 0 <= result.acceptance_rate <= 1
        assert len(result.summary.trace) == 10
        assert result.runtime > 0

    def test_energy_does_not_grow(self):
        noisy = _signal(seed=4)
        result = enhance(noisy, _model(), PriorConfig(n_bases=2), FAST, SMALL)
        assert np.sum(result.enhanced.samples ** 2) <= np.sum(noisy.samples ** 2) * (1 + 1e-6)

    def test_bit_identical_with_seed(self):
        noisy = _signal(seed=5)
        a = enhance(noisy, _model(), PriorConfig(n_bases=2), FAST, SMALL)
        b = enhance(noisy, _model(), PriorConfig(n_bases=2), FAST, SMALL)
        assert a.enhanced.samples.tobytes() == b.enhanced.samples.tobytes()

    def test_scale_equivariant(self):
        # inference runs on a normalised spectrogram, so the mask ignores input gain
        noisy = _signal(seed=6)
        louder = SampleBuffer(3.0 * noisy.samples, noisy.sample_rate)
        a = enhance(noisy, _model(), PriorConfig(n_bases=2), FAST, SMALL)
        b = enhance(louder, _model(), PriorConfig(n_bases=2), FAST, SMALL)
        np.testing.assert_allclose(a.wiener_mask, b.wiener_mask, rtol=1e-9)
        np.testing.assert_allclose(b.enhanced.samples, 3.0 * a.enhanced.samples, rtol=1e-8, atol=1e-12)

    def test_other_sample_rate_warns(self):
        with pytest.warns(UserWarning, match="8000 Hz"):
            enhance(_signal(rate=8000), _model(), PriorConfig(n_bases=2), FAST, SMALL)

    def test_native_rate_does_not_warn(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            enhance(_signal(), _model(), PriorConfig(n_bases=2), FAST, SMALL)

    def test_model_size_mismatch(self):
        with pytest.raises(ShapeError):
            enhance(_signal(), init_vae(10, 2, (4,), np.random.default_rng(0)), PriorConfig(), FAST, SMALL)

    def test_silent_input(self):
        with pytest.raises(DataError, match="silent"):
            enhance(SampleBuffer(np.zeros(2000), 16000), _model(), PriorConfig(), FAST, SMALL)

    def test_too_short(self):
        with pytest.raises(DataError):
            enhance(_signal(n=20), _model(), PriorConfig(), FAST, SMALL)

    def test_diagnostics_csv(self, tmp_path):
        result = enhance(_signal(), _model(), PriorConfig(n_bases=2), FAST, SMALL)
        write_diagnostics(tmp_path / "d.csv", result)
        with open(tmp_path / "d.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "log_likelihood", "acceptance_rate"]
        assert len(rows) == 11
        assert [int(r[0]) for r in rows[1:]] == list(range(10))
        assert all(0.0 <= float(r[2]) <= 1.0 for r in rows[1:])

    def test_input_power_config(self):
        with pytest.raises(ConfigError):
            EnhanceConfig(input_power=0.0)
