import io
import struct
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from . import binio
from .exceptions import (
    ConfigError,
    GaitcastError,
    HistoryError,
    LengthError,
    NumericError,
    RecordFormatError,
    StageError,
)


class TensorCodecTests(SimpleTestCase):
    def test_header_layout(self):
        stream = io.BytesIO()
        binio.write_tensor(stream, np.arange(6.0).reshape(2, 3))
        raw = stream.getvalue()
        self.assertEqual(struct.unpack('<I', raw[:4]), (2,))
        self.assertEqual(struct.unpack('<QQ', raw[4:20]), (2, 3))
        self.assertEqual(struct.unpack('<d', raw[20:28]), (0.0,))
        self.assertEqual(len(raw), 4 + 16 + 6 * 8)

    def test_values_survive_exactly(self):
        values = np.random.default_rng(0).standard_normal((4, 9, 6))
        stream = io.BytesIO()
        binio.write_tensor(stream, values)
        stream.seek(0)
        self.assertTrue(np.array_equal(binio.read_tensor(stream), values))

    def test_scalar_and_empty(self):
        for value in (np.array(3.5), np.empty((0, 9, 6))):
            stream = io.BytesIO()
            binio.write_tensor(stream, value)
            stream.seek(0)
            back = binio.read_tensor(stream)
            self.assertEqual(back.shape, value.shape)

    def test_truncated_data(self):
        stream = io.BytesIO()
        binio.write_tensor(stream, np.ones(4))
        with self.assertRaises(RecordFormatError):
            binio.read_tensor(io.BytesIO(stream.getvalue()[:-3]))

    def test_truncated_header(self):
        with self.assertRaises(RecordFormatError):
            binio.read_tensor(io.BytesIO(b'\x01\x00'))


class CheckpointTests(SimpleTestCase):
    def test_checkpoint_keeps_order_and_config(self):
        tensors = {'b.weight': np.eye(2), 'a.bias': np.arange(3.0)}
        with tempfile.TemporaryDirectory() as tmp:
            stem = Path(tmp) / 'model'
            binio.save_checkpoint(stem, tensors, {'hidden_size': 2})
            loaded, config = binio.load_checkpoint(stem)
        self.assertEqual(list(loaded), ['b.weight', 'a.bias'])
        self.assertEqual(config, {'hidden_size': 2})
        self.assertTrue(np.array_equal(loaded['b.weight'], np.eye(2)))

    def test_trailing_bytes_rejected(self):
        with tempfile.TemporaryDirectory() as tmp:
            stem = Path(tmp) / 'model'
            binio.save_checkpoint(stem, {'w': np.ones(2)}, {})
            with open(stem.with_suffix('.bin'), 'ab') as stream:
                stream.write(b'\x00')
            with self.assertRaises(RecordFormatError):
                binio.load_checkpoint(stem)


class ExceptionTests(SimpleTestCase):
    def test_argument_errors_are_value_errors(self):
        for error in (ConfigError('x'), LengthError('x'), RecordFormatError('x')):
            self.assertIsInstance(error, ValueError)
            self.assertIsInstance(error, GaitcastError)

    def test_context_is_carried(self):
        self.assertEqual(RecordFormatError('bad', column='emg3').column, 'emg3')
        self.assertEqual(NumericError('nan', step=4).step, 4)
        self.assertEqual(HistoryError('short', required=64).required, 64)

    def test_stage_error_names_stage(self):
        error = StageError('denoise', LengthError('too short'))
        self.assertEqual(error.stage, 'denoise')
        self.assertEqual(str(error), 'denoise: too short')
