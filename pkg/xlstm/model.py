"""Stacked residual xLSTM regressor from feature rows to joint targets.

Layout: input projection, then one pre-norm residual block per entry of
``block_pattern`` ('m' matrix memory, 's' scalar memory), then a final
LayerNorm and a linear head. Parameters live in one ordered ``name -> array``
dict; block parameters are prefixed ``blocks.<index>.``.
"""
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from core import binio
from core.exceptions import ConfigError, ShapeError

from . import cells
from .layers import (
    causal_conv,
    causal_conv_backward,
    linear_backward,
    linear_forward,
    norm_backward,
    norm_forward,
    silu,
    silu_grad,
)

logger = logging.getLogger(__name__)

BLOCK_KINDS = ('m', 's')


@dataclass(frozen=True)
class XlstmConfig:
    input_dim: int = 54
    output_dim: int = 16
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 4
    conv_kernel: int = 4
    block_pattern: tuple = ('m', 's')
    slstm_proj_factor: float = 4 / 3
    mlstm_proj_factor: float = 2.0
    learning_rate: float = 0.01
    train_steps: int = 20
    sequence_len: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'block_pattern', tuple(self.block_pattern))
        for name in ('input_dim', 'output_dim', 'hidden_size', 'num_heads', 'conv_kernel', 'sequence_len'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive, got {getattr(self, name)}')
        if self.train_steps < 0:
            raise ConfigError(f'train_steps must be non-negative, got {self.train_steps}')
        if self.learning_rate < 0:
            raise ConfigError(f'learning_rate must be non-negative, got {self.learning_rate}')
        if len(self.block_pattern) != self.num_layers:
            raise ConfigError(
                f'block_pattern has {len(self.block_pattern)} entries for {self.num_layers} layers'
            )
        unknown = set(self.block_pattern) - set(BLOCK_KINDS)
        if unknown:
            raise ConfigError(f'unknown block kind(s) {sorted(unknown)}; use m or s')
        if self.hidden_size % self.num_heads:
            raise ConfigError(
                f'hidden_size {self.hidden_size} is not divisible by num_heads {self.num_heads}'
            )
        if 'm' in self.block_pattern and self.mlstm_inner % self.num_heads:
            raise ConfigError(
                f'mLSTM inner size {self.mlstm_inner} is not divisible by num_heads {self.num_heads}'
            )
        if min(self.mlstm_inner, self.slstm_inner) < 1:
            raise ConfigError('projection factors leave an empty inner dimension')

    @property
    def mlstm_inner(self):
        return int(round(self.mlstm_proj_factor * self.hidden_size))

    @property
    def slstm_inner(self):
        return int(round(self.slstm_proj_factor * self.hidden_size))

    def to_dict(self):
        payload = asdict(self)
        payload['block_pattern'] = list(self.block_pattern)
        return payload

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _slstm_block_params(rng, cfg):
    hid, heads, width = cfg.hidden_size, cfg.num_heads, cfg.slstm_inner
    head_dim = hid // heads
    bias = np.zeros((4, hid))
    bias[1] = 1.0
    return [
        ('norm.gamma', np.ones(hid)),
        ('norm.beta', np.zeros(hid)),
        ('conv.w', _uniform(rng, cfg.conv_kernel, (cfg.conv_kernel, hid))),
        ('conv.b', np.zeros(hid)),
        ('cell.W', _uniform(rng, head_dim, (4, heads, head_dim, head_dim))),
        ('cell.R', _uniform(rng, head_dim, (4, heads, head_dim, head_dim))),
        ('cell.b', bias),
        ('gn.gamma', np.ones(hid)),
        ('gn.beta', np.zeros(hid)),
        ('up.W', _uniform(rng, hid, (hid, 2 * width))),
        ('up.b', np.zeros(2 * width)),
        ('down.W', _uniform(rng, width, (width, hid))),
        ('down.b', np.zeros(hid)),
    ]


def _mlstm_block_params(rng, cfg):
    hid, heads, width = cfg.hidden_size, cfg.num_heads, cfg.mlstm_inner
    head_dim = width // heads
    params = [
        ('norm.gamma', np.ones(hid)),
        ('norm.beta', np.zeros(hid)),
        ('up.W', _uniform(rng, hid, (hid, 2 * width))),
        ('up.b', np.zeros(2 * width)),
        ('conv.w', _uniform(rng, cfg.conv_kernel, (cfg.conv_kernel, width))),
        ('conv.b', np.zeros(width)),
    ]
    for name in 'qkvo':
        params.append((f'cell.W{name}', _uniform(rng, head_dim, (heads, head_dim, head_dim))))
        params.append((f'cell.b{name}', np.zeros(width)))
    params += [
        ('cell.wi', _uniform(rng, width, (width, heads))),
        ('cell.bi', np.zeros(heads)),
        ('cell.wf', _uniform(rng, width, (width, heads))),
        ('cell.bf', np.ones(heads)),
        ('gn.gamma', np.ones(width)),
        ('gn.beta', np.zeros(width)),
        ('skip', np.ones(width)),
        ('down.W', _uniform(rng, width, (width, hid))),
        ('down.b', np.zeros(hid)),
    ]
    return params


def init_params(cfg):
    """Deterministic parameters: uniform(+-1/sqrt(fan_in)) weights, zero biases
    except forget-gate biases at 1, unit norm scales."""
    rng = np.random.default_rng(cfg.seed)
    params = OrderedDict()
    params['embed.W'] = _uniform(rng, cfg.input_dim, (cfg.input_dim, cfg.hidden_size))
    params['embed.b'] = np.zeros(cfg.hidden_size)
    for index, kind in enumerate(cfg.block_pattern):
        build = _mlstm_block_params if kind == 'm' else _slstm_block_params
        for name, value in build(rng, cfg):
            params[f'blocks.{index}.{name}'] = value
    params['final.gamma'] = np.ones(cfg.hidden_size)
    params['final.beta'] = np.zeros(cfg.hidden_size)
    params['head.W'] = _uniform(rng, cfg.hidden_size, (cfg.hidden_size, cfg.output_dim))
    params['head.b'] = np.zeros(cfg.output_dim)
    return params


def _sub(params, prefix):
    return {name[len(prefix):]: value for name, value in params.items() if name.startswith(prefix)}


class XlstmModel:
    def __init__(self, config, params=None):
        self.config = config
        self.params = init_params(config) if params is None else OrderedDict(params)

    def copy(self):
        return XlstmModel(self.config, OrderedDict((k, v.copy()) for k, v in self.params.items()))

    @property
    def parameter_count(self):
        return sum(v.size for v in self.params.values())

    def save(self, stem):
        binio.save_checkpoint(stem, self.params, self.config.to_dict())

    @classmethod
    def load(cls, stem):
        tensors, config = binio.load_checkpoint(stem)
        config = XlstmConfig.from_dict(config)
        expected = init_params(config)
        if list(expected) != list(tensors):
            raise ShapeError(f'checkpoint {stem} does not match its config')
        for name, value in tensors.items():
            if value.shape != expected[name].shape:
                raise ShapeError(f'{name}: checkpoint shape {value.shape}, expected {expected[name].shape}')
        return cls(config, tensors)


# -- blocks --------------------------------------------------------------

def _slstm_block_forward(h, p, cfg):
    z, norm_cache = norm_forward(h, p['norm.gamma'], p['norm.beta'])
    u = causal_conv(z, p['conv.w'], p['conv.b'])
    xc = silu(u)
    cell_params = _sub(p, 'cell.')
    hc, cell_cache = cells.slstm_sequence_forward(xc, cell_params)
    g, gn_cache = norm_forward(hc, p['gn.gamma'], p['gn.beta'], groups=cfg.num_heads)
    ag = linear_forward(g, p['up.W'], p['up.b'])
    a, gate = np.split(ag, 2, axis=-1)
    mixed = a * silu(gate)
    out = h + linear_forward(mixed, p['down.W'], p['down.b'])
    return out, (z, norm_cache, u, xc, cell_params, cell_cache, gn_cache, g, a, gate, mixed)


def _slstm_block_backward(dout, cache, p):
    z, norm_cache, u, xc, cell_params, cell_cache, gn_cache, g, a, gate, mixed = cache
    grads = {}
    dmixed, grads['down.W'], grads['down.b'] = linear_backward(dout, mixed, p['down.W'])
    dag = np.concatenate([dmixed * silu(gate), dmixed * a * silu_grad(gate)], axis=-1)
    dg, grads['up.W'], grads['up.b'] = linear_backward(dag, g, p['up.W'])
    dhc, grads['gn.gamma'], grads['gn.beta'] = norm_backward(dg, gn_cache, p['gn.gamma'])
    dxc, cell_grads = cells.slstm_sequence_backward(dhc, cell_cache, cell_params)
    grads.update({f'cell.{k}': v for k, v in cell_grads.items()})
    dz, grads['conv.w'], grads['conv.b'] = causal_conv_backward(dxc * silu_grad(u), z, p['conv.w'])
    dh, grads['norm.gamma'], grads['norm.beta'] = norm_backward(dz, norm_cache, p['norm.gamma'])
    return dout + dh, grads


def _mlstm_block_forward(h, p, cfg):
    z, norm_cache = norm_forward(h, p['norm.gamma'], p['norm.beta'])
    xm, r = np.split(linear_forward(z, p['up.W'], p['up.b']), 2, axis=-1)
    u = causal_conv(xm, p['conv.w'], p['conv.b'])
    xc = silu(u)
    cell_params = _sub(p, 'cell.')
    hc, cell_cache = cells.mlstm_sequence_forward(xc, cell_params)
    gn, gn_cache = norm_forward(hc, p['gn.gamma'], p['gn.beta'], groups=cfg.num_heads)
    g = gn + p['skip'] * xc
    mixed = g * silu(r)
    out = h + linear_forward(mixed, p['down.W'], p['down.b'])
    return out, (z, norm_cache, xm, r, u, xc, cell_params, cell_cache, gn_cache, g, mixed)


def _mlstm_block_backward(dout, cache, p):
    z, norm_cache, xm, r, u, xc, cell_params, cell_cache, gn_cache, g, mixed = cache
    grads = {}
    dmixed, grads['down.W'], grads['down.b'] = linear_backward(dout, mixed, p['down.W'])
    dg = dmixed * silu(r)
    dr = dmixed * g * silu_grad(r)
    grads['skip'] = (dg * xc).reshape(-1, xc.shape[-1]).sum(axis=0)
    dhc, grads['gn.gamma'], grads['gn.beta'] = norm_backward(dg, gn_cache, p['gn.gamma'])
    dxc, cell_grads = cells.mlstm_sequence_backward(dhc, cell_cache, cell_params)
    grads.update({f'cell.{k}': v for k, v in cell_grads.items()})
    dxc = dxc + dg * p['skip']
    dxm, grads['conv.w'], grads['conv.b'] = causal_conv_backward(dxc * silu_grad(u), xm, p['conv.w'])
    dz, grads['up.W'], grads['up.b'] = linear_backward(
        np.concatenate([dxm, dr], axis=-1), z, p['up.W']
    )
    dh, grads['norm.gamma'], grads['norm.beta'] = norm_backward(dz, norm_cache, p['norm.gamma'])
    return dout + dh, grads


_BLOCKS = {
    'm': (_mlstm_block_forward, _mlstm_block_backward),
    's': (_slstm_block_forward, _slstm_block_backward),
}


# -- model ---------------------------------------------------------------

def _as_batch(x, width, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != width:
        raise ShapeError(f'{name} must be [batch x time x {width}], got {x.shape}')
    return x


def forward_with_cache(model, x):
    cfg, params = model.config, model.params
    squeeze = np.ndim(x) == 2
    x = _as_batch(x, cfg.input_dim, 'input')
    h = linear_forward(x, params['embed.W'], params['embed.b'])
    block_caches = []
    for index, kind in enumerate(cfg.block_pattern):
        p = _sub(params, f'blocks.{index}.')
        h, cache = _BLOCKS[kind][0](h, p, cfg)
        block_caches.append(cache)
    f, final_cache = norm_forward(h, params['final.gamma'], params['final.beta'])
    y = linear_forward(f, params['head.W'], params['head.b'])
    cache = (x, block_caches, final_cache, f)
    return (y[0] if squeeze else y), cache


def forward(model, x):
    """Predictions [batch x time x outputs] (or [time x outputs]) for ``x``."""
    return forward_with_cache(model, x)[0]


def backward(model, cache, dy):
    """Gradients of every parameter given the output gradient ``dy``."""
    cfg, params = model.config, model.params
    x, block_caches, final_cache, f = cache
    dy = np.asarray(dy, dtype=np.float64).reshape(x.shape[:-1] + (cfg.output_dim,))
    grads = OrderedDict()
    df, grads['head.W'], grads['head.b'] = linear_backward(dy, f, params['head.W'])
    dh, grads['final.gamma'], grads['final.beta'] = norm_backward(df, final_cache, params['final.gamma'])
    for index in reversed(range(len(cfg.block_pattern))):
        prefix = f'blocks.{index}.'
        kind = cfg.block_pattern[index]
        dh, block_grads = _BLOCKS[kind][1](dh, block_caches[index], _sub(params, prefix))
        grads.update({prefix + k: v for k, v in block_grads.items()})
    _, grads['embed.W'], grads['embed.b'] = linear_backward(dh, x, params['embed.W'])
    return OrderedDict((name, grads[name]) for name in params)


def rmse(pred, target):
    return float(np.sqrt(np.mean((np.asarray(pred) - np.asarray(target)) ** 2)))


def rmse_grad(pred, target):
    diff = np.asarray(pred) - np.asarray(target)
    loss = np.sqrt(np.mean(diff ** 2))
    if loss == 0:
        return np.zeros_like(diff)
    return diff / (diff.size * loss)


def loss_and_grads(model, x, target):
    pred, cache = forward_with_cache(model, x)
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    return rmse(pred, target), backward(model, cache, rmse_grad(pred, target))


def loss(model, x, target):
    pred = forward(model, x)
    return rmse(pred, np.asarray(target, dtype=np.float64).reshape(pred.shape))
