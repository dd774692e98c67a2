import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConfigError, LengthError, RecordFormatError, ShapeError
from ingest.records import RawRecord

from .extraction import FEATURE_ORDER, FeatureTensor, feature_vector, featurize, target_indices
from .standardize import Standardizer, apply_standardizer, fit_standardizer, invert_standardizer
from .tensor_io import load_tensor_bin, read_tensor_csv, save_tensor_bin, write_tensor_csv
from .windows import WindowSpec, segment

FS = 1926.0


def ramp_record(emg_samples=1000, joint_samples=1000, semg=None):
    if semg is None:
        semg = np.random.default_rng(0).standard_normal((emg_samples, 9))
    joints = np.arange(joint_samples, dtype=np.float64)[:, None] * np.ones(8)
    return RawRecord('S01', 'DNS', semg, joints, -joints, FS)


class WindowTests(SimpleTestCase):
    def test_counts(self):
        spec = WindowSpec()
        self.assertEqual(len(segment(np.zeros(100), spec)), 1)
        windows = segment(np.arange(150.0), spec)
        self.assertEqual([w[0] for w in windows], [0.0, 50.0])
        self.assertEqual(segment(np.zeros(99), spec), [])

    def test_random_lengths(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            window_len = int(rng.integers(2, 60))
            spec = WindowSpec(window_len, int(rng.integers(0, window_len)))
            length = int(rng.integers(0, 400))
            windows = segment(np.arange(float(length)), spec)
            expected = 0 if length < window_len else (length - window_len) // spec.stride + 1
            self.assertEqual(len(windows), expected)
            for i, window in enumerate(windows):
                self.assertEqual(window[0], i * spec.stride)
                self.assertEqual(window.size, window_len)

    def test_bad_overlap(self):
        with self.assertRaises(ConfigError):
            WindowSpec(100, 100)
        with self.assertRaises(ConfigError):
            WindowSpec(0, 0)


class FeatureTests(SimpleTestCase):
    def test_constant_window(self):
        values = feature_vector(np.full(100, 0.5), FS)
        self.assertEqual(list(values), [50.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    def test_alternating_window(self):
        values = dict(zip(FEATURE_ORDER, feature_vector(np.tile([1.0, -1.0], 50), FS)))
        self.assertEqual(values['integral'], 100.0)
        self.assertEqual(values['variance'], 1.0)
        self.assertEqual(values['wavelength'], 198.0)
        self.assertEqual(values['zero_crossing_rate'], 1.0)
        self.assertAlmostEqual(values['correlation_coefficient'], -1.0, places=12)
        self.assertAlmostEqual(values['weighted_avg_frequency'], 963.0, delta=1e-9)

    def test_sine_mean_frequency(self):
        t = np.arange(1926) / FS
        mnf = feature_vector(np.sin(2 * np.pi * 100.0 * t), FS)[5]
        self.assertLess(abs(mnf - 100.0), 2.0)

    def test_scaling(self):
        x = np.random.default_rng(2).standard_normal(100)
        base = feature_vector(x, FS)
        scaled = feature_vector(3.0 * x, FS)
        factors = np.array([3.0, 9.0, 3.0, 1.0, 1.0, 1.0])
        self.assertTrue(np.allclose(scaled, base * factors, rtol=1e-12, atol=1e-12))

    def test_zero_crossing_threshold(self):
        x = np.tile([0.1, -0.1], 50)
        self.assertEqual(feature_vector(x, FS, zc_threshold=0.5)[3], 0.0)
        self.assertEqual(feature_vector(x, FS, zc_threshold=0.2)[3], 1.0)

    def test_too_short(self):
        with self.assertRaises(LengthError):
            feature_vector([1.0], FS)


class FeaturizeTests(SimpleTestCase):
    def test_shapes(self):
        features, targets = featurize(ramp_record(), WindowSpec())
        self.assertEqual(features.data.shape, (19, 9, 6))
        self.assertEqual(targets.data.shape, (19, 8, 2))
        self.assertEqual(features.flat().shape, (19, 54))
        self.assertEqual(targets.flat().shape, (19, 16))

    def test_targets_sit_at_window_ends(self):
        _, targets = featurize(ramp_record(), WindowSpec())
        self.assertEqual(list(targets.data[:3, 0, 0]), [99.0, 149.0, 199.0])
        self.assertEqual(list(targets.data[:3, 0, 1]), [-99.0, -149.0, -199.0])

    def test_coarser_joint_timeline(self):
        rows = target_indices(WindowSpec(), 1000, 500)
        self.assertEqual(list(rows[:2]), [50, 75])
        self.assertEqual(rows[-1], 499)

    def test_silent_semg(self):
        features, _ = featurize(ramp_record(semg=np.zeros((1000, 9))), WindowSpec())
        self.assertTrue(np.array_equal(features.data, np.zeros((19, 9, 6))))

    def test_short_record(self):
        with self.assertRaises(LengthError):
            featurize(ramp_record(emg_samples=99), WindowSpec())


class StandardizerTests(SimpleTestCase):
    def test_two_windows(self):
        s = fit_standardizer(np.array([[1.0], [3.0]]))
        self.assertEqual(list(apply_standardizer(s, np.array([[1.0], [3.0]])).ravel()), [-1.0, 1.0])

    def test_moments_and_inverse(self):
        data = np.random.default_rng(3).normal(5.0, 2.0, (40, 9, 6))
        s = fit_standardizer(FeatureTensor(data))
        scaled = apply_standardizer(s, FeatureTensor(data)).data
        self.assertTrue(np.allclose(scaled.mean(axis=0), 0.0, atol=1e-12))
        self.assertTrue(np.allclose(scaled.std(axis=0), 1.0, atol=1e-12))
        restored = invert_standardizer(s, scaled)
        self.assertTrue(np.allclose(restored, data, rtol=1e-12, atol=1e-12))

    def test_zero_variance_column(self):
        data = np.column_stack([np.full(4, 7.0), np.arange(4.0)])
        s = fit_standardizer(data)
        self.assertEqual(list(s.zero_variance), [True, False])
        scaled = apply_standardizer(s, data)
        self.assertEqual(list(scaled[:, 0]), [7.0] * 4)
        self.assertEqual(list(invert_standardizer(s, scaled)[:, 0]), [7.0] * 4)
        self.assertAlmostEqual(scaled[:, 1].mean(), 0.0, places=12)

    def test_corpus_fit(self):
        s = fit_standardizer([np.array([[0.0]]), np.array([[2.0]])], scope='corpus')
        self.assertEqual(s.mean[0], 1.0)
        self.assertEqual(s.scope, 'corpus')

    def test_single_window(self):
        with self.assertRaises(LengthError):
            fit_standardizer(np.ones((1, 3)))

    def test_shape_mismatch(self):
        s = fit_standardizer(np.ones((3, 2)))
        with self.assertRaises(ShapeError):
            apply_standardizer(s, np.ones((3, 4)))

    def test_dict_is_exact(self):
        s = fit_standardizer(np.random.default_rng(4).standard_normal((10, 3)))
        back = Standardizer.from_dict(s.to_dict())
        self.assertTrue(np.array_equal(back.mean, s.mean))
        self.assertTrue(np.array_equal(back.std, s.std))


class TensorFileTests(SimpleTestCase):
    def test_csv_and_bin_agree(self):
        features, targets = featurize(ramp_record(), WindowSpec())
        with tempfile.TemporaryDirectory() as folder:
            folder = Path(folder)
            write_tensor_csv(features, folder / 'features.csv')
            write_tensor_csv(targets, folder / 'targets.csv')
            save_tensor_bin(features, folder / 'features.bin')
            self.assertTrue(np.array_equal(read_tensor_csv(folder / 'features.csv', 'features').data, features.data))
            self.assertTrue(np.array_equal(read_tensor_csv(folder / 'targets.csv', 'targets').data, targets.data))
            self.assertTrue(np.array_equal(load_tensor_bin(folder / 'features.bin', 'features').data, features.data))
            header = (folder / 'features.csv').read_text().splitlines()[:2]
            self.assertEqual(header[0], 'window,channel_or_joint,feature_or_quantity,value')
            self.assertTrue(header[1].startswith('0,0,integral,'))

    def test_bad_header(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'bad.csv'
            path.write_text('a,b\n1,2\n')
            with self.assertRaises(RecordFormatError):
                read_tensor_csv(path, 'features')
