"""Layer helpers built on the tensor ops.

Layers are plain functions over a :class:`ParamSet` plus a name prefix, so a
model is just a set of named arrays and the code that reads them.
"""
from __future__ import annotations

import numpy as np

from . import tensor as F
from .params import ParamSet
from .tensor import Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_linear(ps: ParamSet, name: str, n_in: int, n_out: int, rng, bias: bool = True) -> None:
    ps.add(f"{name}.W", uniform_init(rng, (n_in, n_out), n_in))
    if bias:
        ps.add(f"{name}.b", np.zeros(n_out))


def linear(ps: ParamSet, name: str, x: Tensor) -> Tensor:
    y = F.matmul(x, ps[f"{name}.W"])
    if f"{name}.b" in ps:
        y = y + ps[f"{name}.b"]
    return y


def init_lstm(ps: ParamSet, name: str, n_in: int, hidden: int, rng, forget_bias: float = 1.0) -> None:
    ps.add(f"{name}.W_ih", uniform_init(rng, (n_in, 4 * hidden), hidden))
    ps.add(f"{name}.W_hh", uniform_init(rng, (hidden, 4 * hidden), hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = forget_bias
    ps.add(f"{name}.b", b)


def lstm_step(x, h_prev, c_prev, w_ih, w_hh, b) -> tuple[Tensor, Tensor]:
    """One LSTM step from primitive ops (gate order i, f, g, o)."""
    x, h_prev, c_prev = F.as_tensor(x), F.as_tensor(h_prev), F.as_tensor(c_prev)
    w_ih, w_hh, b = F.as_tensor(w_ih), F.as_tensor(w_hh), F.as_tensor(b)
    H = w_hh.shape[0]
    if x.shape[-1] != w_ih.shape[0] or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise ValueError(f"lstm_step: dimension mismatch x={x.shape} h={h_prev.shape} "
                         f"c={c_prev.shape} W_ih={w_ih.shape} W_hh={w_hh.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x, h_prev, c_prev = (F.reshape(v, (1, -1)) for v in (x, h_prev, c_prev))
    z = F.matmul(x, w_ih) + F.matmul(h_prev, w_hh) + b
    i = F.sigmoid(z[:, :H])
    f = F.sigmoid(z[:, H:2 * H])
    g = F.tanh(z[:, 2 * H:3 * H])
    o = F.sigmoid(z[:, 3 * H:])
    c = f * c_prev + i * g
    h = o * F.tanh(c)
    if squeeze:
        h, c = F.reshape(h, (-1,)), F.reshape(c, (-1,))
    return h, c


def lstm_layer(ps: ParamSet, name: str, x: Tensor, mask: np.ndarray, h0=None, c0=None,
               reverse: bool = False) -> Tensor:
    B = x.shape[0]
    H = ps[f"{name}.W_hh"].shape[0]
    h0 = F.Tensor(np.zeros((B, H))) if h0 is None else h0
    c0 = F.Tensor(np.zeros((B, H))) if c0 is None else c0
    return F.lstm_sequence(x, mask, ps[f"{name}.W_ih"], ps[f"{name}.W_hh"], ps[f"{name}.b"],
                           h0, c0, reverse=reverse)


def init_bilstm(ps: ParamSet, name: str, n_in: int, hidden: int, layers: int, rng) -> None:
    for layer in range(layers):
        d_in = n_in if layer == 0 else 2 * hidden
        init_lstm(ps, f"{name}.layer{layer}.fwd", d_in, hidden, rng)
        init_lstm(ps, f"{name}.layer{layer}.bwd", d_in, hidden, rng)


def bilstm(ps: ParamSet, name: str, x: Tensor, mask: np.ndarray, layers: int,
           dropout: float = 0.0, rng=None, training: bool = False):
    """Stacked bidirectional LSTM.

    Returns the top-layer outputs (B, T, 2H) and, per layer, the final
    forward state (at each sequence's last real token) and final backward
    state (at position 0).
    """
    lengths = np.asarray(mask, dtype=bool).sum(axis=1)
    rows = np.arange(x.shape[0])
    finals = []
    out = x
    for layer in range(layers):
        inp = F.dropout(out, dropout, rng, training)
        fwd = lstm_layer(ps, f"{name}.layer{layer}.fwd", inp, mask)
        bwd = lstm_layer(ps, f"{name}.layer{layer}.bwd", inp, mask, reverse=True)
        out = F.concat([fwd, bwd], axis=-1)
        finals.append((fwd[rows, lengths - 1], bwd[:, 0]))
    return out, finals


def init_mlp(ps: ParamSet, name: str, sizes: list[int], rng) -> None:
    for k in range(len(sizes) - 1):
        init_linear(ps, f"{name}.{k}", sizes[k], sizes[k + 1], rng)


def mlp(ps: ParamSet, name: str, x: Tensor, n_layers: int, dropout: float = 0.0,
        rng=None, training: bool = False) -> Tensor:
    """Linear layers with ReLU between them (none after the last)."""
    for k in range(n_layers):
        x = F.dropout(x, dropout, rng, training)
        x = linear(ps, f"{name}.{k}", x)
        if k < n_layers - 1:
            x = F.relu(x)
    return x
