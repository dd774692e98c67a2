"""Next-step distributions and autoregressive sample paths."""
import logging
from dataclasses import dataclass

import numpy as np
import torch

from core.exceptions import NumericError, ShapeError

from .lags import lag_tokens, scale_context, unscale

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistHead:
    """Student-t parameters in scaled space."""

    df: np.ndarray
    loc: np.ndarray
    scale: np.ndarray

    @property
    def median(self):
        return self.loc

    def stddev(self):
        return self.scale * np.sqrt(self.df / (self.df - 2.0))


@dataclass(frozen=True, eq=False)
class ForecastDistribution:
    samples: np.ndarray
    target_name: str = ''

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ShapeError(f'samples must be [num_samples x horizon], got {samples.shape}')
        if not np.all(np.isfinite(samples)):
            raise NumericError(f'forecast {self.target_name!r} has non-finite samples')
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def horizon(self):
        return self.samples.shape[1]

    def quantile(self, q, t=None):
        """Empirical quantile ``q`` at step ``t`` (every step when ``t`` is None)."""
        column = self.samples if t is None else self.samples[:, t]
        return np.quantile(column, q, axis=0)

    def mean(self):
        return self.samples.mean(axis=0)

    def std(self):
        return self.samples.std(axis=0)


def _tokens(scaled, config):
    return torch.as_tensor(lag_tokens(scaled, config.lags), dtype=torch.float32)


def _last_step(model, scaled, config):
    with torch.no_grad():
        df, loc, scale = model(_tokens(np.atleast_2d(scaled), config))
    return df[:, -1].double().numpy(), loc[:, -1].double().numpy(), scale[:, -1].double().numpy()


def _check_context(context, config):
    context = np.asarray(context, dtype=np.float64).reshape(-1)
    if context.size != config.context_len:
        raise ShapeError(f'context has {context.size} values, expected {config.context_len}')
    return context


def forward_dist(model, context, config):
    """Student-t parameters (scaled space) for the value after ``context``."""
    scaled, _, _ = scale_context(_check_context(context, config))
    model.eval()
    df, loc, scale = _last_step(model, scaled, config)
    return DistHead(df=df[0], loc=loc[0], scale=scale[0])


def sample_forecast(model, context, config, target_name=''):
    """``num_samples`` autoregressive paths of ``horizon`` steps.

    The scaler is fitted once on the given context; each path draws from its
    own generator seeded with ``(seed, path)`` and feeds its draws back into a
    sliding context window.
    """
    scaled, mean, std = scale_context(_check_context(context, config))
    model.eval()
    paths = config.num_samples
    rngs = [np.random.default_rng([config.seed, path]) for path in range(paths)]
    windows = np.tile(scaled, (paths, 1))
    draws = np.empty((paths, config.horizon))
    for step in range(config.horizon):
        df, loc, scale = _last_step(model, windows, config)
        for path, rng in enumerate(rngs):
            value = loc[path] + scale[path] * rng.standard_t(df[path])
            if not np.isfinite(value):
                logger.warning('non-finite draw on path %d step %d; resampling', path, step)
                value = loc[path] + scale[path] * rng.standard_t(df[path])
                if not np.isfinite(value):
                    raise NumericError(f'path {path} overflowed at step {step}', step=step)
            draws[path, step] = value
        windows = np.concatenate([windows[:, 1:], draws[:, step:step + 1]], axis=1)
    logger.info('sampled %d paths x %d steps for %s', paths, config.horizon, target_name or 'series')
    return ForecastDistribution(unscale(draws, mean, std), target_name)


def climatological_forecast(context, config, target_name=''):
    """Baseline that ignores time: every step resamples the context's values."""
    context = _check_context(context, config)
    rng = np.random.default_rng(config.seed)
    samples = rng.choice(context, size=(config.num_samples, config.horizon), replace=True)
    return ForecastDistribution(samples, target_name)
