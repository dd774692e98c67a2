"""Feature/target tensors on disk.

CSV: one row per entry, header ``window,channel_or_joint,feature_or_quantity,value``;
the third column holds the feature or quantity name.
Binary: the shape-prefixed little-endian float64 layout of :mod:`core.binio`.
"""
import numpy as np
import pandas as pd

from core import binio
from core.exceptions import RecordFormatError
from ingest.records import QUANTITIES

from .extraction import FEATURE_ORDER, FeatureTensor, TargetTensor

CSV_COLUMNS = ['window', 'channel_or_joint', 'feature_or_quantity', 'value']


def _names(tensor):
    return FEATURE_ORDER if isinstance(tensor, FeatureTensor) else QUANTITIES


def write_tensor_csv(tensor, path):
    data = tensor.data
    windows, axis1, axis2 = data.shape
    names = np.array(_names(tensor))
    frame = pd.DataFrame({
        'window': np.repeat(np.arange(windows), axis1 * axis2),
        'channel_or_joint': np.tile(np.repeat(np.arange(axis1), axis2), windows),
        'feature_or_quantity': np.tile(names, windows * axis1),
        'value': data.ravel(),
    })
    frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


def read_tensor_csv(path, kind):
    """Read a CSV written by :func:`write_tensor_csv`; ``kind`` is 'features' or 'targets'."""
    frame = pd.read_csv(path, float_precision='round_trip')
    if list(frame.columns) != CSV_COLUMNS:
        raise RecordFormatError(f'{path}: expected header {",".join(CSV_COLUMNS)}')
    names = FEATURE_ORDER if kind == 'features' else QUANTITIES
    order = {name: i for i, name in enumerate(names)}
    unknown = set(frame['feature_or_quantity']) - set(order)
    if unknown:
        raise RecordFormatError(f'{path}: unknown names {sorted(unknown)}', column='feature_or_quantity')
    windows = int(frame['window'].max()) + 1 if len(frame) else 0
    axis1 = int(frame['channel_or_joint'].max()) + 1 if len(frame) else 0
    data = np.full((windows, axis1, len(names)), np.nan)
    data[
        frame['window'].to_numpy(),
        frame['channel_or_joint'].to_numpy(),
        frame['feature_or_quantity'].map(order).to_numpy(),
    ] = frame['value'].to_numpy(dtype=np.float64)
    return FeatureTensor(data) if kind == 'features' else TargetTensor(data)


def save_tensor_bin(tensor, path):
    binio.save_tensor(path, tensor.data)


def load_tensor_bin(path, kind):
    data = binio.load_tensor(path)
    return FeatureTensor(data) if kind == 'features' else TargetTensor(data)
