"""Dense float64 tensors with a reverse-mode tape.

Every op returns a new :class:`Tensor`; nodes that depend on a tensor with
``requires_grad`` keep a reference to their parents and a closure mapping the
output gradient to per-parent gradients.  :func:`backward` walks the graph in
reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class NonFiniteError(FloatingPointError):
    """Raised as soon as an op produces NaN or Inf."""

    def __init__(self, op: str, where: str = "forward"):
        self.op = op
        super().__init__(f"non-finite value produced by '{op}' during {where}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(name or "tensor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def back(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _node(out, (a, b), back, "div")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _node(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _node(y, (x,), lambda g: (g * y,), "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)
    return _node(y, (x,), lambda g: (g / x.data,), "log")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 1 or b.ndim == 1:
        raise ValueError("matmul expects operands with ndim >= 2")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), back, "matmul")


# ---------------------------------------------------------------- reductions / shape

def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), back, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / n)


def amax(x, axis: int) -> Tensor:
    """Max along one axis; the gradient goes to the first maximiser."""
    x = as_tensor(x)
    idx = np.argmax(x.data, axis=axis)
    out = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis).squeeze(axis)

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (gx,)

    return _node(out, (x,), back, "max")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    inv = np.argsort(axes)
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(np.array(x.data[idx]), (x,), back, "getitem")


def concat(xs: Iterable, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([x.data for x in xs], axis=axis), xs, back, "concat")


def stack(xs: Iterable, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(np.stack([x.data for x in xs], axis=axis), xs, back, "stack")


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup ``weight[ids]`` with scatter-add backward."""
    ids = np.asarray(ids, dtype=np.int64)

    def back(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.shape[-1]))
        return (gw,)

    return _node(weight.data[ids], (weight,), back, "embedding")


# ---------------------------------------------------------------- normalisers

def _softmax_np(z: np.ndarray, axis: int, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - zmax)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis: int = -1, T: float = 1.0, mask=None) -> Tensor:
    """Temperature softmax; masked entries get exactly zero probability."""
    x = as_tensor(x)
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if x.shape[axis] == 0:
        raise ValueError("softmax over an empty axis")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax mask leaves a row with no entries")
    p = _softmax_np(x.data / T, axis, mask)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)) / T,)

    return _node(p, (x,), back, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _node(out, (x,), back, "log_softmax")


def dropout(x, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _node(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- recurrent kernel

def lstm_forward_np(x, mask, w_ih, w_hh, b, h0, c0, reverse=False, keep_cache=True):
    """Masked LSTM over a padded batch, numpy only.

    ``x`` is (B, T, I), ``mask`` (B, T). Gate order along the 4H axis is input,
    forget, cell, output. At masked steps the state is carried through and the
    emitted output is zero, so a reversed pass starts fresh at each sequence's
    last real token.
    Returns (outputs, h_T, c_T, cache).
    """
    B, T, _ = x.shape
    H = w_hh.shape[0]
    xw = x @ w_ih + b
    m = mask.astype(DTYPE)
    h, c = h0, c0
    out = np.zeros((B, T, H), dtype=DTYPE)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    cache = []
    for t in steps:
        z = xw[:, t] + h @ w_hh
        sg = _sigmoid(z[:, :2 * H])
        i, f = sg[:, :H], sg[:, H:]
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        mt = m[:, t, None]
        if keep_cache:
            cache.append((t, h, c, i, f, g, o, tc, mt))
        out[:, t] = mt * h_new
        c = mt * c_new + (1.0 - mt) * c
        h = mt * h_new + (1.0 - mt) * h
    return out, h, c, cache


def lstm_sequence(x: Tensor, mask, w_ih: Tensor, w_hh: Tensor, b: Tensor,
                  h0: Tensor, c0: Tensor, reverse: bool = False) -> Tensor:
    """Fused masked LSTM layer with hand-derived backpropagation through time."""
    x, h0, c0 = as_tensor(x), as_tensor(h0), as_tensor(c0)
    mask = np.asarray(mask, dtype=bool)
    if x.ndim != 3 or mask.shape != x.shape[:2]:
        raise ValueError(f"lstm_sequence: x {x.shape} and mask {mask.shape} disagree")
    if w_ih.shape[0] != x.shape[2] or w_ih.shape[1] != 4 * w_hh.shape[0]:
        raise ValueError(f"lstm_sequence: x {x.shape} incompatible with W_ih {w_ih.shape}")
    out, _, _, cache = lstm_forward_np(x.data, mask, w_ih.data, w_hh.data, b.data,
                                       h0.data, c0.data, reverse)
    H = w_hh.shape[0]

    def back(gout):
        B, T, _ = x.shape
        dxw = np.empty((B, T, 4 * H), dtype=DTYPE)
        hprev = np.empty((B, T, H), dtype=DTYPE)
        w_hh_t = w_hh.data.T
        dh = np.zeros((B, H), dtype=DTYPE)
        dc = np.zeros((B, H), dtype=DTYPE)
        for t, h_prev, c_prev, i, f, g, o, tc, mt in reversed(cache):
            dh_new = mt * (dh + gout[:, t])
            dc_new = mt * dc + dh_new * o * (1.0 - tc * tc)
            dz = dxw[:, t]
            dz[:, :H] = dc_new * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc_new * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc_new * i * (1.0 - g * g)
            dz[:, 3 * H:] = dh_new * tc * o * (1.0 - o)
            hprev[:, t] = h_prev
            dc = dc_new * f + (1.0 - mt) * dc
            dh = dz @ w_hh_t + (1.0 - mt) * dh
        flat = dxw.reshape(B * T, -1)
        dx = dxw @ w_ih.data.T
        dw_ih = x.data.reshape(B * T, -1).T @ flat
        dw_hh = hprev.reshape(B * T, -1).T @ flat
        db = flat.sum(axis=0)
        return dx, dw_ih, dw_hh, db, dh, dc

    return _node(out, (x, w_ih, w_hh, b, h0, c0), back, "lstm")


# ---------------------------------------------------------------- engine

def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for p, gp in zip(node._parents, node._backward(g)):
            if gp is None or not p.requires_grad:
                continue
            if not np.all(np.isfinite(gp)):
                raise NonFiniteError(node.op, "backward")
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + gp
            else:
                grads[id(p)] = np.array(gp, dtype=DTYPE).reshape(p.shape)
