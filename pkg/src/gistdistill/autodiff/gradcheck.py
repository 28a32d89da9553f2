from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamSet
from .tensor import Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f()
        flat[k] = orig - h
        fm = f()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2 * h)
    return g


def check_tensors(loss_fn: Callable[[], Tensor], inputs: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between backprop and finite differences over ``inputs``."""
    for t in inputs:
        t.grad = None
        t.requires_grad = True
    backward(loss_fn())
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = numeric_grad(lambda: float(loss_fn().data), t.data, h)
        worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def check_params(loss_fn: Callable[[], Tensor], params: ParamSet, names=None,
                 h: float = 1e-5, max_coords: int | None = None, rng=None) -> dict[str, float]:
    """Per-parameter max relative error. ``max_coords`` samples coordinates."""
    params.zero_grad()
    backward(loss_fn())
    grads = params.grads()
    rng = rng or np.random.default_rng(0)
    report = {}
    for name in names or params.names():
        data = params[name].data
        flat = data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        a = grads[name].reshape(-1)[idx]
        n = np.empty(len(idx))
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + h
            fp = float(loss_fn().data)
            flat[k] = orig - h
            fm = float(loss_fn().data)
            flat[k] = orig
            n[j] = (fp - fm) / (2 * h)
        report[name] = float(relative_error(a, n).max())
    return report
