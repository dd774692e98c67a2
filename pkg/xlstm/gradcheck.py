"""Finite-difference check of the analytic gradients."""
import logging

import numpy as np

from core.exceptions import ShapeError

from .model import loss, loss_and_grads

logger = logging.getLogger(__name__)

MAX_BATCH = 4
MAX_STEPS = 8
NORM_FLOOR = 1e-6


def gradient_errors(model, x, target, eps=1e-5, max_entries_per_tensor=None, seed=0):
    """Relative error per parameter tensor, ``|a - n| / max(|a|, |n|)`` in L2.

    Central differences of the RMSE loss; ``max_entries_per_tensor`` samples
    that many entries of each tensor instead of probing all of them.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.shape[0] > MAX_BATCH or x.shape[1] > MAX_STEPS:
        raise ShapeError(f'gradient check batch is limited to {MAX_BATCH}x{MAX_STEPS}, got {x.shape[:2]}')
    target = np.asarray(target, dtype=np.float64).reshape(x.shape[:2] + (-1,))
    probe = model.copy()
    _, analytic = loss_and_grads(probe, x, target)
    rng = np.random.default_rng(seed)

    errors = {}
    for name, value in probe.params.items():
        flat = value.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries_per_tensor is not None and flat.size > max_entries_per_tensor:
            entries = rng.choice(flat.size, size=max_entries_per_tensor, replace=False)
        numeric = np.empty(entries.size)
        for slot, entry in enumerate(entries):
            saved = flat[entry]
            flat[entry] = saved + eps
            plus = loss(probe, x, target)
            flat[entry] = saved - eps
            minus = loss(probe, x, target)
            flat[entry] = saved
            numeric[slot] = (plus - minus) / (2.0 * eps)
        exact = analytic[name].reshape(-1)[entries]
        scale = max(np.linalg.norm(exact), np.linalg.norm(numeric), NORM_FLOOR)
        errors[name] = float(np.linalg.norm(exact - numeric) / scale)
    return errors


def grad_check(model, x, target, eps=1e-5, max_entries_per_tensor=None, seed=0):
    """Largest per-tensor relative error between analytic and numeric gradients."""
    errors = gradient_errors(model, x, target, eps, max_entries_per_tensor, seed)
    worst = max(errors, key=errors.get)
    logger.info('gradient check: worst %s rel err %.3e', worst, errors[worst])
    return errors[worst]
