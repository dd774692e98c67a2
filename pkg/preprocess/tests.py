import numpy as np
from django.test import SimpleTestCase
from scipy import signal as sps

from core.exceptions import ConfigError, LengthError, StageError
from features.extraction import featurize
from features.windows import WindowSpec
from ingest.synth import synth_gait

from .conditioning import (
    DenoiseConfig,
    FilterConfig,
    PipelineConfig,
    baseline_correct,
    butterworth_filter,
    condition_channels,
    design_sos,
    maxabs_normalize,
    preprocess_record,
    wpt_denoise,
)

FS = 1926.0


def relative_error(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class BaselineTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(list(baseline_correct([5.0, 5.0, 5.0])), [0.0, 0.0, 0.0])
        self.assertEqual(list(baseline_correct([1.0, 2.0, 3.0])), [-1.0, 0.0, 1.0])

    def test_mean_removed(self):
        x = np.random.default_rng(0).normal(3.0, 2.0, 1000)
        self.assertLess(abs(baseline_correct(x).mean()), 1e-12 * np.abs(x).max())

    def test_input_untouched(self):
        x = np.array([1.0, 2.0, 6.0])
        baseline_correct(x)
        self.assertEqual(list(x), [1.0, 2.0, 6.0])

    def test_empty(self):
        with self.assertRaises(LengthError):
            baseline_correct([])


class DenoiseTests(SimpleTestCase):
    def test_zero_signal(self):
        self.assertTrue(np.array_equal(wpt_denoise(np.zeros(1000)), np.zeros(1000)))

    def test_zero_threshold_reconstructs(self):
        cfg = DenoiseConfig(wavelet_threshold=0.0)
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.standard_normal(4096)
            self.assertLess(relative_error(wpt_denoise(x, cfg), x), 1e-8)

    def test_padding_keeps_length(self):
        x = np.random.default_rng(2).standard_normal(1000)
        y = wpt_denoise(x, DenoiseConfig(wavelet_threshold=0.0))
        self.assertEqual(y.shape, (1000,))
        self.assertLess(relative_error(y, x), 1e-8)

    def test_short_signal_without_padding(self):
        with self.assertRaises(LengthError):
            wpt_denoise(np.ones(100), DenoiseConfig(pad=False))

    def test_noise_is_reduced_with_approximation_kept(self):
        n = 4096
        t = np.arange(n)
        clean = np.sin(2 * np.pi * 4 * t / n)
        noisy = clean + 0.1 * np.random.default_rng(3).standard_normal(n)
        denoised = wpt_denoise(noisy, DenoiseConfig(keep_approximation=True))
        self.assertLess(np.linalg.norm(denoised - clean), np.linalg.norm(noisy - clean))

    def test_spike_noise_is_reduced(self):
        t = np.arange(4096)
        clean = np.sin(2 * np.pi * t / 512)
        noisy = clean.copy()
        noisy[::97] += 4.0
        noisy[1::97] -= 4.0
        denoised = wpt_denoise(noisy)
        self.assertLess(np.linalg.norm(denoised - clean), np.linalg.norm(noisy - clean))

    def test_approximation_band_is_thresholded(self):
        x = np.full(4096, 0.01)
        x[100] = 1.0
        shrunk = wpt_denoise(x, DenoiseConfig(wavelet_threshold=0.99))
        kept = wpt_denoise(x, DenoiseConfig(wavelet_threshold=0.99, keep_approximation=True))
        self.assertAlmostEqual(kept.mean(), x.mean(), delta=1e-12)
        self.assertLess(abs(shrunk.mean()), 0.1 * x.mean())

    def test_hard_mode(self):
        x = np.random.default_rng(4).standard_normal(2048)
        y = wpt_denoise(x, DenoiseConfig(threshold_mode='hard'))
        self.assertEqual(y.shape, x.shape)
        self.assertTrue(np.all(np.isfinite(y)))

    def test_config_checks(self):
        with self.assertRaises(ConfigError):
            DenoiseConfig(wavelet_threshold=-0.1)
        with self.assertRaises(ConfigError):
            DenoiseConfig(decomposition_level=0)
        with self.assertRaises(ConfigError):
            DenoiseConfig(threshold_mode='garrote')
        with self.assertRaises(ConfigError):
            DenoiseConfig(wavelet='db99')


class FilterTests(SimpleTestCase):
    lowpass = FilterConfig(order=7, kind='lowpass', cutoff_hz=(20.0,), sample_rate_hz=FS)

    def response(self, cfg, freq):
        _, h = sps.sosfreqz(design_sos(cfg), worN=[freq], fs=cfg.sample_rate_hz)
        return abs(h[0])

    def test_dc_gain(self):
        y = butterworth_filter(np.full(4000, 2.5), self.lowpass)
        self.assertLess(np.abs(y[-100:] - 2.5).max(), 1e-6)

    def test_cutoff_is_three_db(self):
        cfg = FilterConfig(order=7, kind='lowpass', cutoff_hz=(100.0,), sample_rate_hz=FS)
        self.assertAlmostEqual(self.response(cfg, 100.0), 1 / np.sqrt(2), delta=1e-6)
        t = np.arange(int(4 * FS)) / FS
        y = butterworth_filter(np.sin(2 * np.pi * 100.0 * t), cfg)
        tail = slice(int(2 * FS), None)
        basis = np.column_stack([np.sin(2 * np.pi * 100.0 * t[tail]), np.cos(2 * np.pi * 100.0 * t[tail])])
        coef, *_ = np.linalg.lstsq(basis, y[tail], rcond=None)
        amplitude = np.hypot(*coef)
        self.assertLess(abs(amplitude * np.sqrt(2) - 1.0), 0.02)

    def test_roll_off(self):
        ratio = self.response(self.lowpass, 40.0) / self.response(self.lowpass, 80.0)
        self.assertLess(abs(ratio / 2 ** 7 - 1.0), 0.1)

    def test_bandpass_passes_centre(self):
        cfg = FilterConfig()
        self.assertGreater(self.response(cfg, 150.0), 0.99)
        self.assertLess(self.response(cfg, 2.0), 1e-3)

    def test_linear(self):
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal(500), rng.standard_normal(500)
        left = butterworth_filter(2.0 * x - 3.0 * y)
        right = 2.0 * butterworth_filter(x) - 3.0 * butterworth_filter(y)
        self.assertLess(relative_error(left, right), 1e-9)

    def test_causal(self):
        x = np.random.default_rng(6).standard_normal(300)
        y = butterworth_filter(x)
        x[200] += 10.0
        y2 = butterworth_filter(x)
        self.assertTrue(np.array_equal(y[:200], y2[:200]))
        self.assertFalse(np.array_equal(y[200:], y2[200:]))

    def test_config_checks(self):
        with self.assertRaises(ConfigError):
            FilterConfig(cutoff_hz=(450.0, 20.0))
        with self.assertRaises(ConfigError):
            FilterConfig(cutoff_hz=(20.0, 963.0))
        with self.assertRaises(ConfigError):
            FilterConfig(kind='lowpass', cutoff_hz=(20.0, 450.0))
        with self.assertRaises(ConfigError):
            FilterConfig(order=0)

    def test_empty(self):
        with self.assertRaises(LengthError):
            butterworth_filter([])


class NormalizeTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(list(maxabs_normalize([-2.0, 1.0])), [-1.0, 0.5])
        self.assertEqual(list(maxabs_normalize([0.0, 0.0])), [0.0, 0.0])

    def test_unit_peak_and_idempotent(self):
        x = np.random.default_rng(7).standard_normal(200) * 30.0
        y = maxabs_normalize(x)
        self.assertEqual(np.abs(y).max(), 1.0)
        self.assertTrue(np.array_equal(maxabs_normalize(y), y))


class PipelineTests(SimpleTestCase):
    def test_full_chain_on_synthetic_record(self):
        record = synth_gait(1, 2)
        out = preprocess_record(record, threads=2)
        self.assertEqual(out.semg.shape, record.semg.shape)
        self.assertTrue(np.all(np.isfinite(out.semg)))
        self.assertTrue(np.allclose(np.abs(out.semg).max(axis=0), 1.0))
        self.assertIs(out.angles, record.angles)

    def test_threads_do_not_change_output(self):
        record = synth_gait(2, 1)
        one = preprocess_record(record, threads=1)
        four = preprocess_record(record, threads=4)
        self.assertTrue(np.array_equal(one.semg, four.semg))

    def test_stage_selection(self):
        record = synth_gait(3, 1)
        out = preprocess_record(record, PipelineConfig(stages=('normalize',)))
        expected = record.semg / np.abs(record.semg).max(axis=0)
        self.assertTrue(np.allclose(out.semg, expected, rtol=0, atol=1e-15))

    def test_unknown_stage(self):
        with self.assertRaises(ConfigError):
            PipelineConfig(stages=('correct', 'smooth'))

    def test_failing_stage_is_named(self):
        cfg = PipelineConfig(denoise=DenoiseConfig(pad=False), stages=('denoise',))
        with self.assertRaises(StageError) as caught:
            condition_channels(np.ones((100, 9)), cfg, FS)
        self.assertEqual(caught.exception.stage, 'denoise')

    def test_filter_follows_record_rate(self):
        record = synth_gait(4, 1, sample_rate_hz=1000.0)
        cfg = PipelineConfig(filter=FilterConfig(cutoff_hz=(20.0, 400.0)))
        out = preprocess_record(record, cfg)
        self.assertTrue(np.all(np.isfinite(out.semg)))

    def test_hundred_seeds_survive_the_chain(self):
        spec = WindowSpec()
        for seed in range(100):
            features, targets = featurize(preprocess_record(synth_gait(seed, 1)), spec)
            self.assertTrue(np.all(np.isfinite(features.data)))
            self.assertEqual(features.windows, targets.windows)
