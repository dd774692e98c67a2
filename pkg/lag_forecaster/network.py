"""Decoder-only causal transformer over lag tokens with a Student-t head."""
import logging
import math
from collections import OrderedDict

import torch
import torch.nn as nn
import torch.nn.functional as F

from core import binio
from core.exceptions import ShapeError

from .lags import ForecastConfig

logger = logging.getLogger(__name__)

MIN_DF = 2.0


class CausalSelfAttention(nn.Module):
    def __init__(self, d_model, num_heads, dropout=0.0):
        super().__init__()
        self.num_heads = num_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        batch, steps, width = x.shape
        head_dim = width // self.num_heads
        q, k, v = (
            part.reshape(batch, steps, self.num_heads, head_dim).transpose(1, 2)
            for part in self.qkv(x).split(width, dim=-1)
        )
        scores = q @ k.transpose(-2, -1) / math.sqrt(head_dim)
        future = torch.triu(torch.ones(steps, steps, dtype=torch.bool, device=x.device), diagonal=1)
        weights = torch.softmax(scores.masked_fill(future, float('-inf')), dim=-1)
        z = self.dropout(weights) @ v
        return self.proj(z.transpose(1, 2).reshape(batch, steps, width))


class DecoderBlock(nn.Module):
    def __init__(self, d_model, num_heads, dropout=0.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = CausalSelfAttention(d_model, num_heads, dropout)
        self.norm2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model),
            nn.GELU(),
            nn.Linear(4 * d_model, d_model),
            nn.Dropout(dropout),
        )

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


def sinusoidal_positions(steps, width):
    position = torch.arange(steps, dtype=torch.float32)[:, None]
    rate = torch.exp(torch.arange(0, width, 2, dtype=torch.float32) * (-math.log(10000.0) / width))
    table = torch.zeros(steps, width)
    table[:, 0::2] = torch.sin(position * rate)
    table[:, 1::2] = torch.cos(position * rate[: width // 2])
    return table


class LagTransformer(nn.Module):
    """Maps token rows [batch, time, 1 + lags] to Student-t (df, loc, scale)
    for the value following every position."""

    def __init__(self, config):
        super().__init__()
        self.config = config
        self.embed = nn.Linear(config.token_width, config.d_model)
        self.blocks = nn.ModuleList(
            DecoderBlock(config.d_model, config.num_heads) for _ in range(config.num_layers)
        )
        self.norm = nn.LayerNorm(config.d_model)
        self.head = nn.Linear(config.d_model, 3)

    def forward(self, tokens):
        if tokens.dim() != 3 or tokens.shape[-1] != self.config.token_width:
            raise ShapeError(
                f'tokens must be [batch x time x {self.config.token_width}], got {tuple(tokens.shape)}'
            )
        h = self.embed(tokens) + sinusoidal_positions(tokens.shape[1], self.config.d_model)
        for block in self.blocks:
            h = block(h)
        raw = self.head(self.norm(h))
        df = MIN_DF + F.softplus(raw[..., 0])
        scale = F.softplus(raw[..., 2]) + self.config.scale_floor
        return df, raw[..., 1], scale


def build_forecaster(config):
    """A freshly initialized network; initialization depends only on ``config.seed``."""
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        model = LagTransformer(config)
    logger.debug('forecaster with %d parameters', sum(p.numel() for p in model.parameters()))
    return model


def save_forecaster(model, stem):
    tensors = OrderedDict(
        (name, value.detach().to(torch.float64).numpy()) for name, value in model.state_dict().items()
    )
    binio.save_checkpoint(stem, tensors, model.config.to_dict())


def load_forecaster(stem):
    tensors, config = binio.load_checkpoint(stem)
    model = build_forecaster(ForecastConfig.from_dict(config))
    state = model.state_dict()
    if list(state) != list(tensors):
        raise ShapeError(f'checkpoint {stem} does not match its config')
    model.load_state_dict(
        OrderedDict((name, torch.from_numpy(value).to(state[name].dtype)) for name, value in tensors.items())
    )
    return model
