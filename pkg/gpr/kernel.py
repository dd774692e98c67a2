from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from core.exceptions import ConfigError, ShapeError

SIGNAL_VARIANCE_BOUNDS = (1e-3, 1e3)
LENGTH_SCALE_BOUNDS = (1e-2, 1e2)
NOISE_FLOOR = 1e-10


@dataclass(frozen=True)
class KernelParams:
    """RBF kernel hyperparameters: k(x, x') = s2 * exp(-|x - x'|^2 / (2 l^2))."""

    signal_variance: float = 1.0
    length_scale: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        low, high = SIGNAL_VARIANCE_BOUNDS
        if not low <= self.signal_variance <= high:
            raise ConfigError(f'signal_variance {self.signal_variance} outside [{low}, {high}]')
        low, high = LENGTH_SCALE_BOUNDS
        if not low <= self.length_scale <= high:
            raise ConfigError(f'length_scale {self.length_scale} outside [{low}, {high}]')
        if not self.noise_variance >= NOISE_FLOOR:
            raise ConfigError(f'noise_variance must be >= {NOISE_FLOOR}, got {self.noise_variance}')

    def to_dict(self):
        return {
            'signal_variance': format(self.signal_variance, '.17g'),
            'length_scale': format(self.length_scale, '.17g'),
            'noise_variance': format(self.noise_variance, '.17g'),
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(**{key: float(value) for key, value in payload.items()})


def kernel_eval(x, x2, params):
    x = np.asarray(x, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    if x.shape != x2.shape:
        raise ShapeError(f'kernel inputs differ in dimension: {x.size} vs {x2.size}')
    sq = float(np.dot(x - x2, x - x2))
    return params.signal_variance * np.exp(-sq / (2.0 * params.length_scale ** 2))


def kernel_matrix(X1, X2, params):
    X1 = np.atleast_2d(np.asarray(X1, dtype=np.float64))
    X2 = np.atleast_2d(np.asarray(X2, dtype=np.float64))
    if X1.shape[1] != X2.shape[1]:
        raise ShapeError(f'kernel inputs differ in dimension: {X1.shape[1]} vs {X2.shape[1]}')
    sq = cdist(X1, X2, metric='sqeuclidean')
    return params.signal_variance * np.exp(-sq / (2.0 * params.length_scale ** 2))
