"""Canonical gait record: in-memory types and the CSV + sidecar codec.

A record lives in two files sharing a stem::

    S01_DNS.csv    t,emg1..emg9,angleL_hipAdd..angleR_ankleFlex,torqueL_hipAdd..torqueR_ankleFlex
    S01_DNS.json   {"subject_id": ..., "gait_label": ..., "sample_rate_hz": ...}

The sEMG block and the joint block may have different row counts. The CSV
has max(T, T_j) rows and the shorter block leaves its trailing cells empty.
Row indices in error messages are 0-based data rows (the header is not a row).
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from core.exceptions import (
    DimensionError,
    RangeError,
    RecordFormatError,
    RecordParseError,
)

logger = logging.getLogger(__name__)

EMG_CHANNELS = 9
JOINTS = 8
CANONICAL_RATE_HZ = 1926.0
GAIT_LABELS = ('DNS', 'UPS')
QUANTITIES = ('angle', 'torque')

# Header stems, in column order, for the 4 joints of each leg.
JOINT_KEYS = (
    'L_hipAdd', 'L_hipFlex', 'L_kneeFlex', 'L_ankleFlex',
    'R_hipAdd', 'R_hipFlex', 'R_kneeFlex', 'R_ankleFlex',
)
JOINT_NAMES = (
    'left_hip_adduction', 'left_hip_flexion', 'left_knee_flexion', 'left_ankle_flexion',
    'right_hip_adduction', 'right_hip_flexion', 'right_knee_flexion', 'right_ankle_flexion',
)
EMG_COLUMNS = tuple(f'emg{i}' for i in range(1, EMG_CHANNELS + 1))
ANGLE_COLUMNS = tuple(f'angle{key}' for key in JOINT_KEYS)
TORQUE_COLUMNS = tuple(f'torque{key}' for key in JOINT_KEYS)
HEADER = ('t',) + EMG_COLUMNS + ANGLE_COLUMNS + TORQUE_COLUMNS


def _frozen(values, name, columns=None):
    array = np.array(values, dtype=np.float64, copy=True)
    if columns is not None:
        if array.ndim != 2 or array.shape[1] != columns:
            raise DimensionError(
                f'{name} must have {columns} columns, got shape {array.shape}'
            )
    if not np.all(np.isfinite(array)):
        raise RecordParseError(f'{name} contains non-finite values')
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RawRecord:
    """One subject/trial: sEMG [T x 9] in mV, joint angles and torques [T_j x 8]."""

    subject_id: str
    gait_label: str
    semg: np.ndarray
    angles: np.ndarray
    torques: np.ndarray
    sample_rate_hz: float = CANONICAL_RATE_HZ

    def __post_init__(self):
        if self.gait_label not in GAIT_LABELS:
            raise RecordFormatError(
                f'gait_label must be one of {GAIT_LABELS}, got {self.gait_label!r}',
                column='gait_label',
            )
        rate = float(self.sample_rate_hz)
        if not np.isfinite(rate) or rate <= 0:
            raise RecordFormatError(
                f'sample_rate_hz must be positive, got {self.sample_rate_hz}',
                column='sample_rate_hz',
            )
        object.__setattr__(self, 'sample_rate_hz', rate)
        object.__setattr__(self, 'semg', _frozen(self.semg, 'semg', EMG_CHANNELS))
        object.__setattr__(self, 'angles', _frozen(self.angles, 'angles', JOINTS))
        object.__setattr__(self, 'torques', _frozen(self.torques, 'torques', JOINTS))
        if self.angles.shape[0] != self.torques.shape[0]:
            raise DimensionError(
                f'angles has {self.angles.shape[0]} rows but torques has '
                f'{self.torques.shape[0]}'
            )

    @property
    def emg_samples(self):
        return self.semg.shape[0]

    @property
    def joint_samples(self):
        return self.angles.shape[0]

    def replace_semg(self, semg):
        """Return a copy carrying conditioned sEMG."""
        return RawRecord(
            subject_id=self.subject_id,
            gait_label=self.gait_label,
            semg=semg,
            angles=self.angles,
            torques=self.torques,
            sample_rate_hz=self.sample_rate_hz,
        )


@dataclass(frozen=True, eq=False)
class UnivariateSeries:
    values: np.ndarray
    dt_ms: float
    name: str

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if values.size == 0:
            raise RecordParseError(f'series {self.name!r} is empty')
        if not np.all(np.isfinite(values)):
            raise RecordParseError(f'series {self.name!r} contains non-finite values')
        if not self.dt_ms > 0:
            raise RecordFormatError(f'dt_ms must be positive, got {self.dt_ms}')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return self.values.size


def series_name(joint, quantity):
    return f'{JOINT_NAMES[joint]}_{quantity}'


def to_univariate(record, joint, quantity):
    """Select one joint quantity as a univariate series on the record's time base."""
    if not 0 <= int(joint) < JOINTS or int(joint) != joint:
        raise RangeError(f'joint index must be in 0..{JOINTS - 1}, got {joint}')
    joint = int(joint)
    if quantity == 'angle':
        column = record.angles[:, joint]
    elif quantity == 'torque':
        column = record.torques[:, joint]
    else:
        raise RecordFormatError(
            f'quantity must be one of {QUANTITIES}, got {quantity!r}', column='quantity'
        )
    return UnivariateSeries(
        values=column,
        dt_ms=1000.0 / record.sample_rate_hz,
        name=series_name(joint, quantity),
    )


def all_series(record):
    """The 16 univariate series of a record, angles first then torques."""
    return [
        to_univariate(record, joint, quantity)
        for quantity in QUANTITIES
        for joint in range(JOINTS)
    ]


def sidecar_path(path):
    return Path(path).with_suffix('.json')


def _block_length(block, columns):
    """Rows before the trailing empty region; interior gaps are errors."""
    filled = block != ''
    full = filled.all(axis=1)
    empty = ~filled.any(axis=1)
    length = int(np.argmin(full)) if not full.all() else len(full)
    if not empty[length:].all():
        bad = length + int(np.argmin(empty[length:]))
        raise RecordParseError(
            f'missing value in {", ".join(columns)} block at row {bad}', row=bad
        )
    return length


def _to_float(block, columns):
    try:
        values = block.astype(np.float64)
    except ValueError:
        for row, cells in enumerate(block):
            for col, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise RecordParseError(
                        f'cannot parse {cell!r} in column {columns[col]} at row {row}',
                        row=row,
                    ) from None
        raise
    finite = np.isfinite(values)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise RecordParseError(
            f'non-finite value in column {columns[col]} at row {row}', row=int(row)
        )
    return values


def parse_record(path):
    """Read a canonical CSV and its sidecar into a :class:`RawRecord`."""
    path = Path(path)
    meta_path = sidecar_path(path)
    try:
        meta = json.loads(meta_path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise RecordFormatError(f'missing sidecar {meta_path}', column='sidecar') from None
    for key in ('subject_id', 'gait_label', 'sample_rate_hz'):
        if key not in meta:
            raise RecordFormatError(f'sidecar {meta_path} lacks {key!r}', column=key)

    frame = pd.read_csv(
        path, dtype=str, keep_default_na=False, encoding='utf-8', skipinitialspace=True
    )
    header = tuple(c.strip() for c in frame.columns)
    expected_emg = sum(1 for c in header if c.startswith('emg'))
    if expected_emg != EMG_CHANNELS:
        raise DimensionError(
            f'expected {EMG_CHANNELS} sEMG columns, found {expected_emg}'
        )
    if len(header) != len(HEADER):
        raise DimensionError(f'expected {len(HEADER)} columns, found {len(header)}')
    for got, want in zip(header, HEADER):
        if got != want:
            raise RecordFormatError(
                f'unexpected column {got!r} where {want!r} belongs', column=got
            )

    cells = frame.to_numpy(dtype=str)
    emg_block = cells[:, 1:1 + EMG_CHANNELS]
    joint_block = cells[:, 1 + EMG_CHANNELS:]
    t = _block_length(emg_block, EMG_COLUMNS)
    t_j = _block_length(joint_block, ANGLE_COLUMNS + TORQUE_COLUMNS)
    semg = _to_float(emg_block[:t], EMG_COLUMNS)
    joints = _to_float(joint_block[:t_j], ANGLE_COLUMNS + TORQUE_COLUMNS)
    logger.debug('parsed %s: T=%d, T_j=%d', path, t, t_j)
    return RawRecord(
        subject_id=str(meta['subject_id']),
        gait_label=str(meta['gait_label']),
        semg=semg,
        angles=joints[:, :JOINTS],
        torques=joints[:, JOINTS:],
        sample_rate_hz=float(meta['sample_rate_hz']),
    )


def write_record(record, path, significant_digits=9):
    """Write ``record`` as canonical CSV plus sidecar JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = max(record.emg_samples, record.joint_samples)
    table = np.full((rows, len(HEADER)), np.nan)
    table[:, 0] = np.arange(rows) / record.sample_rate_hz
    table[:record.emg_samples, 1:1 + EMG_CHANNELS] = record.semg
    joints = np.hstack([record.angles, record.torques])
    table[:record.joint_samples, 1 + EMG_CHANNELS:] = joints
    frame = pd.DataFrame(table, columns=list(HEADER))
    frame.to_csv(
        path,
        index=False,
        na_rep='',
        float_format=f'%.{significant_digits}g',
        encoding='utf-8',
        lineterminator='\n',
    )
    meta = {
        'subject_id': record.subject_id,
        'gait_label': record.gait_label,
        'sample_rate_hz': record.sample_rate_hz,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path
