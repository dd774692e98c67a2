"""Lag sets, forecaster configuration, lag tokens and context scaling."""
from dataclasses import asdict, dataclass, field

import numpy as np

from core.exceptions import ConfigError, HistoryError, LengthError, RangeError
from ingest.records import UnivariateSeries

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class LagSet:
    lags: tuple = tuple(range(1, 65))

    def __post_init__(self):
        lags = tuple(self.lags)
        if not lags:
            raise ConfigError('lag set must not be empty')
        if any(int(lag) != lag or lag < 1 for lag in lags):
            raise ConfigError(f'lags must be positive integers, got {list(lags)}')
        if len(set(lags)) != len(lags):
            raise ConfigError(f'lags must be distinct, got {list(lags)}')
        object.__setattr__(self, 'lags', tuple(sorted(int(lag) for lag in lags)))

    def __len__(self):
        return len(self.lags)

    @property
    def max_lag(self):
        return self.lags[-1]


@dataclass(frozen=True)
class ForecastConfig:
    horizon: int = 128
    context_len: int = 256
    num_samples: int = 100
    seed: int = 0
    lags: LagSet = field(default_factory=LagSet)
    d_model: int = 64
    num_layers: int = 2
    num_heads: int = 4
    learning_rate: float = 1e-3
    batch_size: int = 32
    batches_per_epoch: int = 16
    epochs: int = 50
    patience: int = 5
    scale_floor: float = 1e-6

    def __post_init__(self):
        if not isinstance(self.lags, LagSet):
            object.__setattr__(self, 'lags', LagSet(tuple(self.lags)))
        for name in ('horizon', 'context_len', 'num_samples', 'd_model', 'num_layers',
                     'num_heads', 'batch_size', 'batches_per_epoch'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.epochs < 0 or self.patience < 1:
            raise ConfigError(f'need epochs >= 0 and patience >= 1, got {self.epochs}/{self.patience}')
        if self.context_len < self.lags.max_lag:
            raise ConfigError(
                f'context_len {self.context_len} is shorter than the largest lag {self.lags.max_lag}'
            )
        if self.d_model % self.num_heads:
            raise ConfigError(f'd_model {self.d_model} is not divisible by num_heads {self.num_heads}')
        if not self.learning_rate > 0 or not self.scale_floor > 0:
            raise ConfigError('learning_rate and scale_floor must be positive')

    @property
    def token_width(self):
        return 1 + len(self.lags)

    def to_dict(self):
        payload = asdict(self)
        payload['lags'] = list(self.lags.lags)
        return payload

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        payload['lags'] = LagSet(tuple(payload['lags']))
        return cls(**payload)


def _values(series):
    if isinstance(series, UnivariateSeries):
        return series.values
    return np.asarray(series, dtype=np.float64).reshape(-1)


def build_lag_features(series, t, lags):
    """``[value[t - lag] for lag in lags]``."""
    values = _values(series)
    lags = lags if isinstance(lags, LagSet) else LagSet(tuple(lags))
    if not 0 <= t < values.size:
        raise RangeError(f'index {t} outside a series of {values.size} values')
    if t < lags.max_lag:
        raise HistoryError(
            f'index {t} has too little history for lag {lags.max_lag}', required=lags.max_lag
        )
    return values[t - np.asarray(lags.lags)]


def lag_tokens(values, lags):
    """Token rows ``[x_t, x_{t-l1}, x_{t-l2}, ...]`` for every position t.

    Lags reaching before the first value read as zero (the scaled mean).
    """
    values = np.asarray(values, dtype=np.float64)
    steps = values.shape[-1]
    offsets = np.asarray(lags.lags)
    index = np.arange(steps)[:, None] - offsets[None, :]
    valid = index >= 0
    lagged = np.where(valid, values[..., np.clip(index, 0, None)], 0.0)
    return np.concatenate([values[..., :, None], lagged], axis=-1)


def scale_context(context):
    """Zero-mean, unit (population) std version of ``context``; std floored."""
    context = np.asarray(context, dtype=np.float64).reshape(-1)
    if context.size < 2:
        raise LengthError(f'context needs at least 2 values, got {context.size}')
    mean = float(context.mean())
    std = max(float(context.std()), STD_FLOOR)
    return (context - mean) / std, mean, std


def unscale(values, mean, std):
    return np.asarray(values) * std + mean
