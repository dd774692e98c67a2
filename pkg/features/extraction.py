"""Per-window sEMG features and the aligned feature/target tensors.

Feature order is fixed everywhere: integral (IEMG), variance, wavelength
(waveform length), zero-crossing rate, lag-1 correlation coefficient and
weighted average (mean) frequency.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from core.exceptions import DimensionError, LengthError, RecordParseError
from ingest.records import EMG_CHANNELS, JOINTS, QUANTITIES

from .windows import window_matrix

logger = logging.getLogger(__name__)

FEATURE_ORDER = (
    'integral',
    'variance',
    'wavelength',
    'zero_crossing_rate',
    'correlation_coefficient',
    'weighted_avg_frequency',
)
TARGET_UNITS = ('degrees', 'newton-meters')


def _checked(data, name, shape_tail):
    array = np.array(data, dtype=np.float64, copy=True)
    if array.ndim != 3 or array.shape[1:] != shape_tail:
        raise DimensionError(f'{name} must be [W x {shape_tail[0]} x {shape_tail[1]}], got {array.shape}')
    if not np.all(np.isfinite(array)):
        raise RecordParseError(f'{name} contains non-finite values')
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    data: np.ndarray
    feature_order: tuple = FEATURE_ORDER

    def __post_init__(self):
        object.__setattr__(self, 'data', _checked(self.data, 'FeatureTensor', (EMG_CHANNELS, len(FEATURE_ORDER))))

    @property
    def windows(self):
        return self.data.shape[0]

    def flat(self):
        """[W x 54] rows, channel-major."""
        return self.data.reshape(self.windows, -1)


@dataclass(frozen=True, eq=False)
class TargetTensor:
    data: np.ndarray
    units: tuple = TARGET_UNITS

    def __post_init__(self):
        object.__setattr__(self, 'data', _checked(self.data, 'TargetTensor', (JOINTS, len(QUANTITIES))))

    @property
    def windows(self):
        return self.data.shape[0]

    def flat(self):
        """[W x 16] rows ordered angles of joints 0..7 then torques of joints 0..7."""
        return np.concatenate([self.data[:, :, 0], self.data[:, :, 1]], axis=1)


def window_features(windows, sample_rate_hz, zc_threshold=0.0):
    """Features of every row of ``windows`` [W x n] as a [W x 6] array."""
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise LengthError(f'feature windows need at least 2 samples, got shape {x.shape}')
    n = x.shape[1]
    diff = np.diff(x, axis=1)

    integral = np.abs(x).sum(axis=1)
    variance = x.var(axis=1)
    wavelength = np.abs(diff).sum(axis=1)

    positive = x >= 0
    crossings = positive[:, 1:] != positive[:, :-1]
    if zc_threshold > 0:
        crossings &= np.abs(diff) >= zc_threshold
    zcr = crossings.sum(axis=1) / (n - 1)

    head, tail = x[:, :-1], x[:, 1:]
    head_c = head - head.mean(axis=1, keepdims=True)
    tail_c = tail - tail.mean(axis=1, keepdims=True)
    denom = np.sqrt((head_c ** 2).sum(axis=1) * (tail_c ** 2).sum(axis=1))
    varying = (np.ptp(head, axis=1) > 0) & (np.ptp(tail, axis=1) > 0) & (denom > 0)
    correlation = np.zeros(x.shape[0])
    correlation[varying] = (head_c * tail_c).sum(axis=1)[varying] / denom[varying]

    freqs, power = sps.periodogram(x, fs=sample_rate_hz, detrend='constant', axis=1)
    total = power.sum(axis=1)
    spread = (np.ptp(x, axis=1) > 0) & (total > 0)
    mnf = np.zeros(x.shape[0])
    mnf[spread] = (power[spread] * freqs).sum(axis=1) / total[spread]

    return np.stack([integral, variance, wavelength, zcr, correlation, mnf], axis=1)


def feature_vector(window, sample_rate_hz, zc_threshold=0.0):
    window = np.asarray(window, dtype=np.float64).reshape(1, -1)
    return window_features(window, sample_rate_hz, zc_threshold)[0]


def target_indices(spec, emg_samples, joint_samples):
    """Joint-timeline index of each window's last sEMG sample (round half up)."""
    ends = spec.starts(emg_samples) + spec.window_len - 1
    scaled = ends * (joint_samples / emg_samples)
    return np.minimum(np.floor(scaled + 0.5).astype(np.int64), joint_samples - 1)


def featurize(record, spec, zc_threshold=0.0):
    """Windowed features [W x 9 x 6] and window-end targets [W x 8 x 2]."""
    total = record.emg_samples
    if total < spec.window_len:
        raise LengthError(
            f'{record.subject_id}: {total} sEMG samples give no window of {spec.window_len}'
        )
    if record.joint_samples == 0:
        raise LengthError(f'{record.subject_id}: no joint samples to align targets with')
    count = spec.count(total)
    features = np.empty((count, EMG_CHANNELS, len(FEATURE_ORDER)))
    for channel in range(EMG_CHANNELS):
        windows = window_matrix(record.semg[:, channel], spec)
        features[:, channel, :] = window_features(windows, record.sample_rate_hz, zc_threshold)

    rows = target_indices(spec, total, record.joint_samples)
    targets = np.stack([record.angles[rows], record.torques[rows]], axis=2)
    logger.info('featurized %s: %d windows', record.subject_id, count)
    return FeatureTensor(features), TargetTensor(targets)
