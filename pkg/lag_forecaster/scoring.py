"""CRPS scoring of sample forecasts and the summary tables built from it."""
import logging

import numpy as np
import pandas as pd

from core import binio
from core.exceptions import LengthError, ShapeError

from .sampling import ForecastDistribution

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
FORECAST_COLUMNS = ('target', 'step', 'q05', 'q25', 'q50', 'q75', 'q95', 'truth')


def crps_empirical(samples, y):
    """``mean|X - y| - (1 / 2S^2) sum_ij |X_i - X_j|`` for one observation."""
    x = np.sort(np.asarray(samples, dtype=np.float64).reshape(-1))
    size = x.size
    if size == 0:
        raise LengthError('CRPS needs at least one sample')
    spread = np.dot(2.0 * np.arange(size) - size + 1.0, x) / size ** 2
    return max(float(np.abs(x - y).mean() - spread), 0.0)


def crps_path(dist, truth):
    """Per-step CRPS of a :class:`ForecastDistribution` against ``truth``."""
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if truth.size != dist.horizon:
        raise ShapeError(f'{dist.target_name}: {truth.size} truths for horizon {dist.horizon}')
    return np.array([crps_empirical(dist.samples[:, t], truth[t]) for t in range(truth.size)])


def box_stats(values):
    values = np.asarray(values, dtype=np.float64)
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        'min': float(values.min()),
        'q1': float(q1),
        'median': float(median),
        'q3': float(q3),
        'max': float(values.max()),
    }


def _quantity(name):
    for quantity in ('angle', 'torque'):
        if name.endswith(quantity):
            return quantity
    return None


def _summary(values):
    values = np.asarray(values, dtype=np.float64)
    return {'mean': float(values.mean()), 'std': float(values.std()), 'box': box_stats(values)}


def evaluate_forecasts(dists, truths):
    """Horizon-averaged CRPS per forecast, aggregated with population std.

    Targets named ``*_angle`` / ``*_torque`` are also summarized per group.
    """
    dists, truths = list(dists), list(truths)
    if len(dists) != len(truths):
        raise ShapeError(f'{len(dists)} forecasts for {len(truths)} truth series')
    if not dists:
        raise LengthError('no forecasts to evaluate')
    scores = [float(crps_path(d, t).mean()) for d, t in zip(dists, truths)]
    summary = _summary(scores)
    summary['per_series'] = [
        {'target': d.target_name, 'crps': score} for d, score in zip(dists, scores)
    ]
    groups = {}
    for d, score in zip(dists, scores):
        quantity = _quantity(d.target_name)
        if quantity:
            groups.setdefault(quantity, []).append(score)
    summary['groups'] = {name: _summary(values) for name, values in sorted(groups.items())}
    logger.info('CRPS over %d forecasts: mean %.4f std %.4f', len(scores), summary['mean'], summary['std'])
    return summary


def forecast_frame(dists, truths):
    """Quantile table with one row per (target, step)."""
    frames = []
    for dist, truth in zip(dists, truths):
        quantiles = dist.quantile(QUANTILES)
        frame = pd.DataFrame({
            'target': dist.target_name,
            'step': np.arange(1, dist.horizon + 1),
            **{name: quantiles[i] for i, name in enumerate(FORECAST_COLUMNS[2:7])},
            'truth': np.asarray(truth, dtype=np.float64),
        })
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)[list(FORECAST_COLUMNS)]


def write_forecast_csv(path, dists, truths):
    forecast_frame(dists, truths).to_csv(path, index=False, float_format='%.17g')


def save_forecast_archive(stem, dists, truths, config=None):
    """Store raw sample paths and truths through the checkpoint codec."""
    tensors = {}
    for dist, truth in zip(dists, truths):
        tensors[f'{dist.target_name}.samples'] = dist.samples
        tensors[f'{dist.target_name}.truth'] = np.asarray(truth, dtype=np.float64)
    binio.save_checkpoint(stem, tensors, {
        'targets': [d.target_name for d in dists],
        'forecast': config or {},
    })


def load_forecast_archive(stem):
    """``(dists, truths, manifest_config)`` written by :func:`save_forecast_archive`."""
    tensors, config = binio.load_checkpoint(stem)
    dists, truths = [], []
    for name in config['targets']:
        dists.append(ForecastDistribution(tensors[f'{name}.samples'], name))
        truths.append(tensors[f'{name}.truth'])
    return dists, truths, config
