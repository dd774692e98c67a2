"""Column-wise z-scoring fitted over the window axis."""
import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import LengthError, ShapeError

from .extraction import FeatureTensor

logger = logging.getLogger(__name__)

SCOPES = ('record', 'corpus')


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray
    scope: str = 'record'

    def to_dict(self):
        return {
            'shape': list(self.mean.shape),
            'mean': [repr(float(v)) for v in self.mean.ravel()],
            'std': [repr(float(v)) for v in self.std.ravel()],
            'zero_variance': [bool(v) for v in self.zero_variance.ravel()],
            'scope': self.scope,
        }

    @classmethod
    def from_dict(cls, payload):
        shape = tuple(payload['shape'])
        return cls(
            mean=np.array([float(v) for v in payload['mean']]).reshape(shape),
            std=np.array([float(v) for v in payload['std']]).reshape(shape),
            zero_variance=np.array(payload['zero_variance'], dtype=bool).reshape(shape),
            scope=payload['scope'],
        )


def _array(tensor):
    return tensor.data if isinstance(tensor, FeatureTensor) else np.asarray(tensor, dtype=np.float64)


def fit_standardizer(tensors, scope='record'):
    """Fit on one tensor, or on the window-axis concatenation of several.

    Zero-variance columns are flagged and get mean 0 and std 1, so applying
    the standardizer leaves them untouched.
    """
    if isinstance(tensors, (list, tuple)):
        data = np.concatenate([_array(t) for t in tensors], axis=0)
    else:
        data = _array(tensors)
    if data.shape[0] < 2:
        raise LengthError(f'standardizer fit needs at least 2 windows, got {data.shape[0]}')
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    flat = np.ptp(data, axis=0) == 0
    if flat.any():
        logger.warning('%d zero-variance column(s) left untouched', int(flat.sum()))
    mean = np.where(flat, 0.0, mean)
    std = np.where(flat, 1.0, std)
    return Standardizer(mean=mean, std=std, zero_variance=flat, scope=scope)


def _check(standardizer, data):
    if data.shape[1:] != standardizer.mean.shape:
        raise ShapeError(
            f'standardizer fitted on {standardizer.mean.shape}, got windows of {data.shape[1:]}'
        )


def apply_standardizer(standardizer, tensor):
    data = _array(tensor)
    _check(standardizer, data)
    out = (data - standardizer.mean) / standardizer.std
    return FeatureTensor(out) if isinstance(tensor, FeatureTensor) else out


def invert_standardizer(standardizer, tensor):
    data = _array(tensor)
    _check(standardizer, data)
    out = data * standardizer.std + standardizer.mean
    return FeatureTensor(out) if isinstance(tensor, FeatureTensor) else out
