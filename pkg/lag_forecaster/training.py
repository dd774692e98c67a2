"""Next-step negative log-likelihood training with early stopping."""
import copy
import logging

import numpy as np
import torch
from torch.distributions import StudentT

from core.exceptions import LengthError, NumericError

from .lags import lag_tokens, scale_context

logger = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.2
MAX_VALIDATION_SLICES = 64


def _values(series):
    return np.asarray(getattr(series, 'values', series), dtype=np.float64).reshape(-1)


def split_series(values, context_len, validation_fraction=VALIDATION_FRACTION):
    """Training head and validation tail of ``values``.

    The tail keeps ``context_len`` values of overlap so its first slice has a
    full context. When either part is too short for one slice, both parts are
    the whole series.
    """
    span = context_len + 1
    cut = int(round(values.size * (1.0 - validation_fraction)))
    head, tail = values[:cut], values[max(cut - context_len, 0):]
    if head.size < span or tail.size < span or cut >= values.size:
        logger.warning('series of %d values too short to hold out a validation tail', values.size)
        return values, values
    return head, tail


def _slice_batch(slices, context_len):
    """Scaled tokens and next-step targets for stacked [B x (context+1)] slices."""
    inputs, targets = [], []
    for piece in slices:
        scaled, mean, std = scale_context(piece[:context_len])
        inputs.append(scaled)
        targets.append((piece[1:] - mean) / std)
    return np.stack(inputs), np.stack(targets)


def _nll(model, slices, config):
    inputs, targets = _slice_batch(slices, config.context_len)
    tokens = torch.as_tensor(lag_tokens(inputs, config.lags), dtype=torch.float32)
    df, loc, scale = model(tokens)
    target = torch.as_tensor(targets, dtype=torch.float32)
    return -StudentT(df, loc, scale).log_prob(target).mean()


def _random_slices(rng, parts, count, span):
    weights = np.array([part.size - span + 1 for part in parts], dtype=np.float64)
    picks = rng.choice(len(parts), size=count, p=weights / weights.sum())
    out = []
    for index in picks:
        start = rng.integers(0, parts[index].size - span + 1)
        out.append(parts[index][start:start + span])
    return out


def _fixed_slices(parts, span):
    out = []
    for part in parts:
        starts = np.unique(np.linspace(0, part.size - span, num=MAX_VALIDATION_SLICES).astype(int))
        out.extend(part[start:start + span] for start in starts)
    return out


def _validation_nll(model, slices, config):
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(slices), config.batch_size):
            chunk = slices[start:start + config.batch_size]
            total += float(_nll(model, chunk, config)) * len(chunk)
    return total / len(slices)


def train_forecaster(model, series, config, epochs=None, patience=None):
    """Train ``model`` in place; returns ``(model, validation_curve)``.

    The model ends with the weights of its best validation epoch.
    """
    epochs = config.epochs if epochs is None else epochs
    patience = config.patience if patience is None else patience
    if epochs == 0:
        return model, []
    span = config.context_len + 1
    values = [_values(s) for s in series]
    for v in values:
        if v.size <= span:
            raise LengthError(f'series of {v.size} values is too short for context {config.context_len}')
    parts = [split_series(v, config.context_len) for v in values]
    train_parts = [head for head, _ in parts]
    validation = _fixed_slices([tail for _, tail in parts], span)

    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    best_loss, best_state, stale = np.inf, copy.deepcopy(model.state_dict()), 0
    curve = []
    for epoch in range(epochs):
        model.train()
        for _ in range(config.batches_per_epoch):
            loss = _nll(model, _random_slices(rng, train_parts, config.batch_size, span), config)
            if not torch.isfinite(loss):
                raise NumericError(f'training loss became {loss.item()} in epoch {epoch}', step=epoch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

        model.eval()
        val_loss = _validation_nll(model, validation, config)
        if not np.isfinite(val_loss):
            raise NumericError(f'validation loss became {val_loss} in epoch {epoch}', step=epoch)
        curve.append(val_loss)
        logger.debug('epoch %d validation nll=%.6f', epoch, val_loss)
        if val_loss < best_loss:
            best_loss, best_state, stale = val_loss, copy.deepcopy(model.state_dict()), 0
        else:
            stale += 1
            if stale >= patience:
                logger.info('early stop after epoch %d (best nll %.4f)', epoch, best_loss)
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, curve
