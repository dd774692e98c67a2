"""Full-batch Adam training of :class:`~xlstm.model.XlstmModel` on RMSE."""
import logging
from collections import OrderedDict

import numpy as np
import pandas as pd

from core.exceptions import LengthError, NumericError, ShapeError

from .model import loss_and_grads

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


class Adam:
    def __init__(self, params, learning_rate, beta1=BETA1, beta2=BETA2, eps=ADAM_EPS):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.steps = 0
        self.m = OrderedDict((name, np.zeros_like(v)) for name, v in params.items())
        self.v = OrderedDict((name, np.zeros_like(v)) for name, v in params.items())

    def step(self, params, grads):
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        for name, grad in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad ** 2
            update = (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            params[name] = params[name] - self.learning_rate * update


def make_sequences(features, targets, sequence_len):
    """Cut aligned [W x F] / [W x O] rows into [B x sequence_len x .] batches.

    Consecutive non-overlapping chunks; a trailing partial chunk is dropped
    unless it is the only one.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.shape[0] != targets.shape[0]:
        raise ShapeError(f'{features.shape[0]} feature rows vs {targets.shape[0]} target rows')
    rows = features.shape[0]
    if rows == 0:
        raise LengthError('no windows to train on')
    if rows < sequence_len:
        return features[None], targets[None]
    count = rows // sequence_len
    used = count * sequence_len
    return (
        features[:used].reshape(count, sequence_len, -1),
        targets[:used].reshape(count, sequence_len, -1),
    )


def train(model, features, targets, config=None):
    """Train a copy of ``model``; returns ``(trained_model, loss_curve)``.

    Each step is one full-batch pass: ``loss_curve[s]`` is the RMSE before the
    update of step ``s``, so ``learning_rate=0`` gives a constant curve.
    """
    cfg = config or model.config
    model = model.copy()
    optimizer = Adam(model.params, cfg.learning_rate)
    curve = []
    for step in range(cfg.train_steps):
        loss, grads = loss_and_grads(model, features, targets)
        if not np.isfinite(loss):
            raise NumericError(f'training loss became {loss} at step {step}', step=step)
        curve.append(loss)
        logger.debug('step %d rmse=%.6f', step, loss)
        optimizer.step(model.params, grads)
    if curve:
        logger.info('trained %d steps: rmse %.4f -> %.4f', len(curve), curve[0], curve[-1])
    return model, curve


def write_loss_curve(path, curve):
    frame = pd.DataFrame({'step': np.arange(len(curve)), 'rmse': np.asarray(curve, dtype=np.float64)})
    frame.to_csv(path, index=False, float_format='%.17g')
