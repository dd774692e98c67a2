"""Exact GP regression with an RBF kernel, one model per output."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, optimize

from core.exceptions import ConditioningError, LengthError, ShapeError

from .kernel import (
    LENGTH_SCALE_BOUNDS,
    SIGNAL_VARIANCE_BOUNDS,
    KernelParams,
    kernel_matrix,
)

logger = logging.getLogger(__name__)

JITTER_ESCALATIONS = 3
GRID_POINTS = 5


@dataclass(frozen=True, eq=False)
class GprModel:
    params: KernelParams
    X_train: np.ndarray
    y_train: np.ndarray
    alpha: np.ndarray
    chol_factor: np.ndarray

    @property
    def dimension(self):
        return self.X_train.shape[1]

    def to_dict(self):
        fmt = np.vectorize(lambda v: format(float(v), '.17g'), otypes=[object])
        return {
            'params': self.params.to_dict(),
            'X_train': fmt(self.X_train).tolist(),
            'y_train': fmt(self.y_train).tolist(),
        }

    @classmethod
    def from_dict(cls, payload):
        X = np.array(payload['X_train'], dtype=object).astype(np.float64)
        y = np.array(payload['y_train'], dtype=object).astype(np.float64)
        return fit(X, y, KernelParams.from_dict(payload['params']))


def _training_arrays(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < 1:
        raise LengthError('GP fit needs at least one training row')
    if X.shape[0] != y.size:
        raise ShapeError(f'{X.shape[0]} input rows but {y.size} targets')
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ShapeError('GP training data must be finite')
    return X, y


def _factor(X, params):
    """Cholesky of K + noise*I, escalating the noise tenfold on failure."""
    K = kernel_matrix(X, X, params)
    noise = params.noise_variance
    for attempt in range(JITTER_ESCALATIONS + 1):
        try:
            L = linalg.cholesky(K + noise * np.eye(K.shape[0]), lower=True)
        except linalg.LinAlgError:
            noise *= 10.0
            logger.warning('Cholesky failed, raising noise variance to %.3g', noise)
            continue
        if attempt:
            params = replace(params, noise_variance=noise)
        return L, params
    raise ConditioningError(
        f'kernel matrix not positive definite after {JITTER_ESCALATIONS} jitter escalations'
    )


def log_marginal_likelihood(X, y, params):
    X, y = _training_arrays(X, y)
    L, _ = _factor(X, params)
    alpha = linalg.cho_solve((L, True), y)
    return float(
        -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * y.size * np.log(2.0 * np.pi)
    )


def hyperparameter_grid(points=GRID_POINTS):
    """Log-spaced grid over the signal-variance and length-scale bounds."""
    variances = np.logspace(*np.log10(SIGNAL_VARIANCE_BOUNDS), points)
    scales = np.logspace(*np.log10(LENGTH_SCALE_BOUNDS), points)
    return [(s2, ell) for s2 in variances for ell in scales]


def optimize_params(X, y, noise_variance=1e-6, starts=5):
    """Maximize the log marginal likelihood over the kernel bounds.

    The bound box is scanned on a log grid, then a bounded Powell search in
    log space is started from the ``starts`` best grid points.
    """
    X, y = _training_arrays(X, y)
    bounds = [tuple(np.log(SIGNAL_VARIANCE_BOUNDS)), tuple(np.log(LENGTH_SCALE_BOUNDS))]

    def objective(theta):
        s2, ell = np.exp(np.clip(theta, [b[0] for b in bounds], [b[1] for b in bounds]))
        try:
            params = KernelParams(float(s2), float(ell), noise_variance)
            return -log_marginal_likelihood(X, y, params)
        except ConditioningError:
            return np.inf

    candidates = []
    for s2, ell in hyperparameter_grid():
        theta = np.log([s2, ell])
        candidates.append((objective(theta), tuple(theta)))
    candidates.sort()
    best_value, best_theta = candidates[0]
    for value, theta in candidates[:max(1, int(starts))]:
        if not np.isfinite(value):
            continue
        result = optimize.minimize(objective, np.array(theta), method='Powell', bounds=bounds)
        if result.fun < best_value:
            best_value, best_theta = float(result.fun), tuple(result.x)
    if not np.isfinite(best_value):
        raise ConditioningError('no hyperparameters on the grid gave a usable kernel matrix')
    s2, ell = np.exp(np.clip(best_theta, [b[0] for b in bounds], [b[1] for b in bounds]))
    params = KernelParams(float(s2), float(ell), noise_variance)
    logger.info('optimized kernel: signal_variance=%.4g length_scale=%.4g lml=%.4f',
                params.signal_variance, params.length_scale, -best_value)
    return params


def fit(X, y, params='optimize', noise_variance=1e-6, starts=5):
    X, y = _training_arrays(X, y)
    if isinstance(params, str):
        if params != 'optimize':
            raise ShapeError(f"params must be KernelParams or 'optimize', got {params!r}")
        params = optimize_params(X, y, noise_variance=noise_variance, starts=starts)
    L, params = _factor(X, params)
    alpha = linalg.cho_solve((L, True), y)
    if not np.all(np.isfinite(alpha)):
        raise ConditioningError('GP solve vector is not finite')
    return GprModel(params=params, X_train=X, y_train=y, alpha=alpha, chol_factor=L)


def predict(model, X_query):
    """Posterior mean and variance (noise included) at each query row."""
    Xq = np.atleast_2d(np.asarray(X_query, dtype=np.float64))
    if Xq.shape[1] != model.dimension:
        raise ShapeError(f'query dimension {Xq.shape[1]} != training dimension {model.dimension}')
    K_star = kernel_matrix(Xq, model.X_train, model.params)
    mean = K_star @ model.alpha
    v = linalg.solve_triangular(model.chol_factor, K_star.T, lower=True)
    variance = (
        model.params.signal_variance - np.sum(v * v, axis=0) + model.params.noise_variance
    )
    return mean, np.maximum(variance, 0.0)


def evaluate(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.size != y_pred.size:
        raise ShapeError(f'{y_true.size} truths but {y_pred.size} predictions')
    if y_true.size == 0:
        raise LengthError('cannot evaluate empty predictions')
    error = y_pred - y_true
    return float(np.mean(np.abs(error))), float(np.sqrt(np.mean(error ** 2)))


def fit_outputs(X, Y, params='optimize', noise_variance=1e-6, starts=5,
                optimize_rows=None, threads=1):
    """One independent model per column of ``Y``.

    With ``optimize_rows`` set, hyperparameters are searched on an evenly
    spaced subset of that many rows and the model is then fitted on all rows.
    """
    X, Y = np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)

    def one(column):
        y = Y[:, column]
        chosen = params
        if isinstance(params, str) and optimize_rows and X.shape[0] > optimize_rows:
            rows = subsample_rows(X.shape[0], optimize_rows)
            chosen = optimize_params(X[rows], y[rows], noise_variance, starts)
        model = fit(X, y, chosen, noise_variance=noise_variance, starts=starts)
        logger.debug('fitted output %d: %s', column, model.params)
        return model

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        return list(pool.map(one, range(Y.shape[1])))


def subsample_rows(total, cap):
    """Evenly spaced row indices, at most ``cap`` of them."""
    if total <= cap:
        return np.arange(total)
    return np.unique(np.round(np.linspace(0, total - 1, cap)).astype(np.int64))
