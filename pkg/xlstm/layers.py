"""Differentiable building blocks with hand-written backward passes.

Every ``*_forward`` returns its output and a cache; the matching
``*_backward`` takes the output gradient and that cache and returns the
input gradient followed by parameter gradients. Arrays are float64 and the
feature axis is always last.
"""
import numpy as np
from scipy.special import expit

from core.exceptions import ShapeError

NORM_EPS = 1e-5


def _rows(a):
    return a.reshape(-1, a.shape[-1])


def linear_forward(x, W, b):
    return x @ W + b


def linear_backward(dy, x, W):
    dW = _rows(x).T @ _rows(dy)
    db = _rows(dy).sum(axis=0)
    return dy @ W.T, dW, db


def silu(x):
    return x * expit(x)


def silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def norm_forward(x, gamma, beta, groups=1, eps=NORM_EPS):
    """Layer normalization over the last axis, split into ``groups`` groups.

    ``groups=1`` is LayerNorm; ``groups=heads`` is the per-head GroupNorm.
    """
    size = x.shape[-1]
    if size % groups:
        raise ShapeError(f'{size} features cannot form {groups} groups')
    xg = x.reshape(x.shape[:-1] + (groups, size // groups))
    centred = xg - xg.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt((centred ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = (centred * inv).reshape(x.shape)
    return xhat * gamma + beta, (xhat, inv, groups)


def norm_backward(dy, cache, gamma):
    xhat, inv, groups = cache
    dgamma = _rows(dy * xhat).sum(axis=0)
    dbeta = _rows(dy).sum(axis=0)
    grouped = dy.shape[:-1] + (groups, dy.shape[-1] // groups)
    dxhat = (dy * gamma).reshape(grouped)
    xh = xhat.reshape(grouped)
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xh * (dxhat * xh).mean(axis=-1, keepdims=True)
    )
    return dx.reshape(dy.shape), dgamma, dbeta


def block_diagonal_apply(x, weights, heads=None):
    """Per-head linear map: slice h of ``x`` becomes ``x_h @ W_h``.

    ``weights`` is [heads, d_in, d_out]; there is no mixing between heads.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 3:
        raise ShapeError(f'block-diagonal weights must be [heads, d_in, d_out], got {weights.shape}')
    heads = weights.shape[0] if heads is None else int(heads)
    size = x.shape[-1]
    if heads < 1 or size % heads:
        raise ShapeError(f'input dimension {size} is not divisible by {heads} heads')
    if weights.shape[0] != heads or weights.shape[1] != size // heads:
        raise ShapeError(
            f'weights {weights.shape} do not fit {heads} heads of width {size // heads}'
        )
    xh = x.reshape(x.shape[:-1] + (heads, size // heads))
    y = np.einsum('...hi,hio->...ho', xh, weights)
    return y.reshape(x.shape[:-1] + (heads * weights.shape[2],))


def block_diagonal_backward(dy, x, weights):
    heads, d_in, d_out = weights.shape
    xh = x.reshape(-1, heads, d_in)
    dyh = dy.reshape(-1, heads, d_out)
    dW = np.einsum('nhi,nho->hio', xh, dyh)
    dx = np.einsum('nho,hio->nhi', dyh, weights).reshape(x.shape)
    return dx, dW


def _kernel(weight, channels):
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim == 1:
        weight = np.repeat(weight[:, None], channels, axis=1)
    if weight.ndim != 2 or weight.shape[1] != channels or weight.shape[0] < 1:
        raise ShapeError(f'conv kernel {weight.shape} does not fit {channels} channels')
    return weight


def causal_conv(x, weight, bias=None):
    """Depthwise causal convolution along the time axis (second to last).

    ``weight`` is [kernel, channels] (or [kernel], shared by all channels);
    tap ``kernel - 1`` multiplies the current sample, so y[t] sees x[0..t] only.
    """
    x = np.asarray(x, dtype=np.float64)
    channels = x.shape[-1]
    weight = _kernel(weight, channels)
    steps = x.shape[-2]
    if steps == 0:
        return x.copy()
    size = weight.shape[0]
    pad = np.zeros(x.shape[:-2] + (size - 1, channels))
    padded = np.concatenate([pad, x], axis=-2)
    y = np.zeros_like(x)
    for tap in range(size):
        y += weight[tap] * padded[..., tap:tap + steps, :]
    if bias is not None:
        y += bias
    return y


def causal_conv_backward(dy, x, weight):
    channels = x.shape[-1]
    weight = _kernel(weight, channels)
    steps = x.shape[-2]
    size = weight.shape[0]
    pad = np.zeros(x.shape[:-2] + (size - 1, channels))
    padded = np.concatenate([pad, x], axis=-2)
    dpadded = np.zeros_like(padded)
    dweight = np.zeros_like(weight)
    for tap in range(size):
        window = padded[..., tap:tap + steps, :]
        dweight[tap] = _rows(dy * window).sum(axis=0)
        dpadded[..., tap:tap + steps, :] += dy * weight[tap]
    return dpadded[..., size - 1:, :], dweight, _rows(dy).sum(axis=0)
