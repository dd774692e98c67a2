from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.exceptions import ConfigError


@dataclass(frozen=True)
class WindowSpec:
    window_len: int = 100
    overlap: int = 50

    def __post_init__(self):
        if int(self.window_len) != self.window_len or self.window_len < 1:
            raise ConfigError(f'window_len must be a positive integer, got {self.window_len}')
        if int(self.overlap) != self.overlap or not 0 <= self.overlap < self.window_len:
            raise ConfigError(
                f'overlap must satisfy 0 <= overlap < window_len, got {self.overlap}'
            )

    @property
    def stride(self):
        return self.window_len - self.overlap

    def count(self, length):
        if length < self.window_len:
            return 0
        return (length - self.window_len) // self.stride + 1

    def starts(self, length):
        return np.arange(self.count(length)) * self.stride


def window_matrix(signal, spec):
    """Windows of ``signal`` as rows of a read-only [W x window_len] view."""
    x = np.asarray(signal, dtype=np.float64)
    if spec.count(x.size) == 0:
        return np.empty((0, spec.window_len))
    return sliding_window_view(x, spec.window_len)[::spec.stride]


def segment(signal, spec):
    """Window i covers samples [i*stride, i*stride + window_len)."""
    return [np.array(row) for row in window_matrix(signal, spec)]
