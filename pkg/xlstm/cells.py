"""Exponentially gated recurrent cells (scalar-memory and matrix-memory).

Both cells keep a log-domain stabilizer ``m`` so that the exponential input
and forget gates never overflow: ``m_t = max(f~_t + m_{t-1}, i~_t)`` and the
gates are rescaled by ``exp(-m_t)``. State arrays carry an optional leading
batch axis.
"""
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from core.exceptions import NumericError

from .layers import block_diagonal_apply, block_diagonal_backward

GATES = ('i', 'f', 'z', 'o')


@dataclass
class SlstmState:
    c: np.ndarray
    n: np.ndarray
    h: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, hidden, batch=None):
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(*(np.zeros(shape) for _ in range(4)))


@dataclass
class MlstmState:
    C: np.ndarray
    n: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, heads, head_dim, batch=None):
        lead = () if batch is None else (batch,)
        return cls(
            C=np.zeros(lead + (heads, head_dim, head_dim)),
            n=np.zeros(lead + (heads, head_dim)),
            m=np.zeros(lead + (heads,)),
        )


def _check_finite(h, state):
    arrays = [h] + [getattr(state, f.name) for f in fields(state)]
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise NumericError(f'{type(state).__name__} became non-finite')


def _stabilized_gates(i_pre, f_pre, m_prev):
    grown = f_pre + m_prev
    m = np.maximum(grown, i_pre)
    return m, np.exp(i_pre - m), np.exp(grown - m), grown >= i_pre


def _stabilizer_backward(di, df, i, f, first, dm_carry):
    """Gradients of the gate pre-activations and of m_{t-1}."""
    di_pre = di * i
    df_pre = df * f
    dm = dm_carry - di_pre - df_pre
    dm_prev = df_pre + dm * first
    df_pre = df_pre + dm * first
    di_pre = di_pre + dm * ~first
    return di_pre, df_pre, dm_prev


# -- scalar memory -------------------------------------------------------

def slstm_step_forward(x_t, state, params):
    W, R, b = params['W'], params['R'], params['b']
    pre = [
        block_diagonal_apply(x_t, W[g]) + block_diagonal_apply(state.h, R[g]) + b[g]
        for g in range(len(GATES))
    ]
    i_pre, f_pre, z_pre, o_pre = pre
    m, i, f, first = _stabilized_gates(i_pre, f_pre, state.m)
    z = np.tanh(z_pre)
    o = expit(o_pre)
    c = f * state.c + i * z
    n = f * state.n + i
    h = o * c / n
    cache = (x_t, state, i, f, z, o, c, n, first)
    return h, SlstmState(c=c, n=n, h=h, m=m), cache


def slstm_step(x_t, state, params):
    """One recurrent step; returns ``(h_t, new_state)``."""
    h, new_state, _ = slstm_step_forward(x_t, state, params)
    _check_finite(h, new_state)
    return h, new_state


def slstm_step_backward(dh, carry, cache, params):
    """Backward through one step.

    ``carry`` holds the gradients flowing into this step's state from the
    future (an :class:`SlstmState` of gradients). Returns ``(dx_t, carry_prev,
    grads)``.
    """
    x_t, prev, i, f, z, o, c, n, first = cache
    W, R = params['W'], params['R']
    dh = dh + carry.h
    do = dh * c / n
    dc = carry.c + dh * o / n
    dn = carry.n - dh * o * c / n ** 2
    di = dc * z + dn
    df = dc * prev.c + dn * prev.n
    dz = dc * i
    di_pre, df_pre, dm_prev = _stabilizer_backward(di, df, i, f, first, carry.m)
    dpre = (di_pre, df_pre, dz * (1.0 - z ** 2), do * o * (1.0 - o))

    grads = {'W': np.zeros_like(W), 'R': np.zeros_like(R), 'b': np.zeros_like(params['b'])}
    dx = np.zeros_like(x_t)
    dh_prev = np.zeros_like(prev.h)
    for g, dp in enumerate(dpre):
        dxg, grads['W'][g] = block_diagonal_backward(dp, x_t, W[g])
        dhg, grads['R'][g] = block_diagonal_backward(dp, prev.h, R[g])
        grads['b'][g] = dp.reshape(-1, dp.shape[-1]).sum(axis=0)
        dx += dxg
        dh_prev += dhg
    carry_prev = SlstmState(c=dc * f, n=dn * f, h=dh_prev, m=dm_prev)
    return dx, carry_prev, grads


def slstm_sequence_forward(x, params):
    """Run the cell over x [batch, time, hidden] from a zero state."""
    batch, steps, hidden = x.shape
    state = SlstmState.zeros(hidden, batch)
    out = np.zeros_like(x)
    caches = []
    for t in range(steps):
        out[:, t], state, cache = slstm_step_forward(x[:, t], state, params)
        caches.append(cache)
    return out, caches


def slstm_sequence_backward(dout, caches, params):
    batch, steps, hidden = dout.shape
    carry = SlstmState.zeros(hidden, batch)
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    dx = np.zeros_like(dout)
    for t in reversed(range(steps)):
        dx[:, t], carry, step_grads = slstm_step_backward(dout[:, t], carry, caches[t], params)
        for name, value in step_grads.items():
            grads[name] += value
    return dx, grads


# -- matrix memory -------------------------------------------------------

def _split_heads(a, heads):
    return a.reshape(a.shape[:-1] + (heads, a.shape[-1] // heads))


def mlstm_step_forward(x_t, state, params):
    heads, head_dim, _ = params['Wq'].shape
    q = _split_heads(block_diagonal_apply(x_t, params['Wq']) + params['bq'], heads)
    k = _split_heads(block_diagonal_apply(x_t, params['Wk']) + params['bk'], heads)
    k = k / np.sqrt(head_dim)
    v = _split_heads(block_diagonal_apply(x_t, params['Wv']) + params['bv'], heads)
    o = expit(block_diagonal_apply(x_t, params['Wo']) + params['bo'])
    i_pre = x_t @ params['wi'] + params['bi']
    f_pre = x_t @ params['wf'] + params['bf']
    m, i, f, first = _stabilized_gates(i_pre, f_pre, state.m)

    C = f[..., None, None] * state.C + i[..., None, None] * v[..., :, None] * k[..., None, :]
    n = f[..., None] * state.n + i[..., None] * k
    num = np.einsum('...ij,...j->...i', C, q)
    s = np.einsum('...j,...j->...', n, q)
    den = np.maximum(np.abs(s), 1.0)
    h_tilde = (num / den[..., None]).reshape(x_t.shape[:-1] + (-1,))
    h = o * h_tilde
    cache = (x_t, state, q, k, v, o, i, f, first, C, n, num, s, den, h_tilde)
    return h, MlstmState(C=C, n=n, m=m), cache


def mlstm_step(x_t, state, params):
    """One matrix-memory step; returns ``(h_t, new_state)``."""
    h, new_state, _ = mlstm_step_forward(x_t, state, params)
    _check_finite(h, new_state)
    return h, new_state


def mlstm_step_backward(dh, carry, cache, params):
    x_t, prev, q, k, v, o, i, f, first, C, n, num, s, den, h_tilde = cache
    heads, head_dim, _ = params['Wq'].shape

    do_pre = dh * h_tilde * o * (1.0 - o)
    dh_tilde = _split_heads(dh * o, heads)
    dnum = dh_tilde / den[..., None]
    dden = -(dh_tilde * num).sum(axis=-1) / den ** 2
    ds = dden * np.sign(s) * (np.abs(s) > 1.0)

    dC = carry.C + dnum[..., :, None] * q[..., None, :]
    dq = np.einsum('...ij,...i->...j', C, dnum) + ds[..., None] * n
    dn = carry.n + ds[..., None] * q

    df = (dC * prev.C).sum(axis=(-2, -1)) + (dn * prev.n).sum(axis=-1)
    di = np.einsum('...ij,...i,...j->...', dC, v, k) + (dn * k).sum(axis=-1)
    dv = i[..., None] * np.einsum('...ij,...j->...i', dC, k)
    dk = i[..., None] * (np.einsum('...ij,...i->...j', dC, v) + dn)
    di_pre, df_pre, dm_prev = _stabilizer_backward(di, df, i, f, first, carry.m)

    flat = x_t.shape[:-1] + (-1,)
    projections = (
        ('q', dq.reshape(flat)),
        ('k', (dk / np.sqrt(head_dim)).reshape(flat)),
        ('v', dv.reshape(flat)),
        ('o', do_pre),
    )
    grads = {}
    dx = np.zeros_like(x_t)
    for name, dp in projections:
        dxp, grads[f'W{name}'] = block_diagonal_backward(dp, x_t, params[f'W{name}'])
        grads[f'b{name}'] = dp.reshape(-1, dp.shape[-1]).sum(axis=0)
        dx += dxp
    for name, dp in (('i', di_pre), ('f', df_pre)):
        grads[f'w{name}'] = x_t.reshape(-1, x_t.shape[-1]).T @ dp.reshape(-1, heads)
        grads[f'b{name}'] = dp.reshape(-1, heads).sum(axis=0)
        dx += dp @ params[f'w{name}'].T

    carry_prev = MlstmState(C=f[..., None, None] * dC, n=f[..., None] * dn, m=dm_prev)
    return dx, carry_prev, grads


def mlstm_sequence_forward(x, params):
    batch, steps, _ = x.shape
    heads, head_dim, _ = params['Wq'].shape
    state = MlstmState.zeros(heads, head_dim, batch)
    out = np.zeros_like(x)
    caches = []
    for t in range(steps):
        out[:, t], state, cache = mlstm_step_forward(x[:, t], state, params)
        caches.append(cache)
    return out, caches


def mlstm_sequence_backward(dout, caches, params):
    batch, steps, _ = dout.shape
    heads, head_dim, _ = params['Wq'].shape
    carry = MlstmState.zeros(heads, head_dim, batch)
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    dx = np.zeros_like(dout)
    for t in reversed(range(steps)):
        dx[:, t], carry, step_grads = mlstm_step_backward(dout[:, t], carry, caches[t], params)
        for name, value in step_grads.items():
            grads[name] += value
    return dx, grads
