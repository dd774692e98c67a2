import json
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from core.exceptions import ConfigError, DimensionError, RangeError, RecordFormatError, RecordParseError

from .records import HEADER, RawRecord, all_series, parse_record, sidecar_path, to_univariate, write_record
from .synth import GAIT_FREQUENCY_HZ, record_length, synth_gait


def write_table(folder, rows, header=HEADER, meta=None):
    path = Path(folder) / 'S01_DNS.csv'
    pd.DataFrame(rows, columns=list(header)).to_csv(path, index=False)
    sidecar = meta or {'subject_id': 'S01', 'gait_label': 'DNS', 'sample_rate_hz': 1926.0}
    sidecar_path(path).write_text(json.dumps(sidecar))
    return path


class ParseRecordTests(SimpleTestCase):
    def test_three_rows(self):
        rows = np.arange(3 * len(HEADER), dtype=float).reshape(3, -1)
        with tempfile.TemporaryDirectory() as tmp:
            record = parse_record(write_table(tmp, rows))
        self.assertEqual(record.emg_samples, 3)
        self.assertEqual(record.joint_samples, 3)
        self.assertEqual(record.semg[0, 0], 1.0)
        self.assertEqual(record.torques[2, 7], rows[2, -1])

    def test_eight_emg_columns(self):
        header = tuple(c for c in HEADER if c != 'emg9')
        rows = np.zeros((3, len(header)))
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(DimensionError):
                parse_record(write_table(tmp, rows, header))

    def test_misnamed_column(self):
        header = tuple('kneeAngle' if c == 'angleL_kneeFlex' else c for c in HEADER)
        rows = np.zeros((2, len(header)))
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(RecordFormatError) as caught:
                parse_record(write_table(tmp, rows, header))
        self.assertEqual(caught.exception.column, 'kneeAngle')

    def test_non_finite_value_reports_row(self):
        rows = np.zeros((4, len(HEADER)))
        rows[2, 5] = np.inf
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(RecordParseError) as caught:
                parse_record(write_table(tmp, rows))
        self.assertEqual(caught.exception.row, 2)

    def test_shorter_joint_block(self):
        rows = np.ones((5, len(HEADER)))
        rows[3:, 10:] = np.nan
        with tempfile.TemporaryDirectory() as tmp:
            record = parse_record(write_table(tmp, rows))
        self.assertEqual(record.emg_samples, 5)
        self.assertEqual(record.joint_samples, 3)

    def test_missing_sidecar(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_table(tmp, np.zeros((2, len(HEADER))))
            sidecar_path(path).unlink()
            with self.assertRaises(RecordFormatError):
                parse_record(path)

    def test_synthetic_round_trip(self):
        record = synth_gait(5, 2, gait_label='UPS')
        with tempfile.TemporaryDirectory() as tmp:
            back = parse_record(write_record(record, Path(tmp) / 'synth.csv'))
        self.assertEqual(back.subject_id, record.subject_id)
        self.assertEqual(back.gait_label, 'UPS')
        self.assertEqual(back.sample_rate_hz, record.sample_rate_hz)
        for name in ('semg', 'angles', 'torques'):
            self.assertTrue(np.array_equal(getattr(back, name), getattr(record, name)), name)


class RawRecordTests(SimpleTestCase):
    def test_unknown_gait(self):
        with self.assertRaises(RecordFormatError):
            RawRecord('S', 'RUN', np.zeros((2, 9)), np.zeros((2, 8)), np.zeros((2, 8)))

    def test_joint_rows_must_agree(self):
        with self.assertRaises(DimensionError):
            RawRecord('S', 'DNS', np.zeros((2, 9)), np.zeros((2, 8)), np.zeros((3, 8)))

    def test_arrays_are_read_only(self):
        record = RawRecord('S', 'DNS', np.zeros((2, 9)), np.zeros((2, 8)), np.zeros((2, 8)))
        with self.assertRaises(ValueError):
            record.semg[0, 0] = 1.0


class UnivariateTests(SimpleTestCase):
    def setUp(self):
        angles = np.zeros((3, 8))
        angles[:, 3] = [1.0, 2.0, 3.0]
        self.record = RawRecord('S', 'DNS', np.zeros((3, 9)), angles, np.zeros((3, 8)))

    def test_column_selection(self):
        series = to_univariate(self.record, 3, 'angle')
        self.assertEqual(list(series.values), [1.0, 2.0, 3.0])
        self.assertEqual(series.name, 'left_ankle_flexion_angle')
        self.assertLess(abs(series.dt_ms - 0.519), 5e-4)

    def test_joint_out_of_range(self):
        with self.assertRaises(RangeError):
            to_univariate(self.record, 9, 'angle')

    def test_unknown_quantity(self):
        with self.assertRaises(RecordFormatError):
            to_univariate(self.record, 0, 'power')

    def test_sixteen_series(self):
        series = all_series(self.record)
        self.assertEqual(len(series), 16)
        self.assertEqual(series[8].name, 'left_hip_adduction_torque')
        self.assertTrue(all(len(s) == 3 for s in series))


class SynthTests(SimpleTestCase):
    def test_same_seed_is_bit_identical(self):
        a, b = synth_gait(1, 2), synth_gait(1, 2)
        for name in ('semg', 'angles', 'torques'):
            self.assertTrue(np.array_equal(getattr(a, name), getattr(b, name)))

    def test_length(self):
        record = synth_gait(1, 2)
        self.assertEqual(record.emg_samples, round(2 * 1926 / GAIT_FREQUENCY_HZ['DNS']))
        self.assertEqual(record.emg_samples, record_length(2, 1926.0))

    def test_angle_period(self):
        record = synth_gait(2, 4)
        period = 1926.0 / GAIT_FREQUENCY_HZ['DNS']
        x = record.angles[:, 2] - record.angles[:, 2].mean()
        corr = np.correlate(x, x, mode='full')[x.size - 1:]
        low, high = int(0.5 * period), int(1.5 * period)
        peak = low + int(np.argmax(corr[low:high]))
        self.assertLess(abs(peak - period), 0.02 * period)

    def test_gaits_differ(self):
        dns, ups = synth_gait(1, 2, gait_label='DNS'), synth_gait(1, 2, gait_label='UPS')
        self.assertNotEqual(dns.emg_samples, ups.emg_samples)
        self.assertGreater(np.ptp(ups.angles[:, 2]), np.ptp(dns.angles[:, 2]))

    def test_semg_follows_joint_velocity(self):
        record = synth_gait(3, 4)
        velocity = np.gradient(record.angles[:, 0])
        envelope = np.abs(record.semg[:, 0])
        active = envelope[velocity > 0].mean()
        quiet = envelope[velocity < 0].mean()
        self.assertGreater(active, 2.0 * quiet)

    def test_zero_cycles(self):
        with self.assertRaises(ConfigError):
            synth_gait(1, 0)
