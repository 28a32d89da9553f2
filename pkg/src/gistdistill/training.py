"""Shared optimisation loop: forward, backward, clip, Adam, structured logs."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .autodiff import AdamState, NonFiniteError, ParamSet, Tensor, adam_step, backward, clip_global_norm

log = logging.getLogger("gistdistill")


class DivergenceError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    lr: float = 4e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float = 2.0


def batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless stream of shuffled index batches, reshuffled every epoch."""
    while True:
        order = rng.permutation(n)
        for k in range(0, n, batch_size):
            yield order[k:k + batch_size]


def train_steps(params: ParamSet, loss_fn: Callable[[np.ndarray], Tensor], index_stream: Iterator,
                n_steps: int, opt: OptimConfig, stage: str, log_every: int = 50,
                trainable: list[str] | None = None, state: AdamState | None = None,
                on_step: Callable[[int, float], bool] | None = None) -> list[float]:
    """Run ``n_steps`` updates; returns the per-step loss curve.

    ``on_step(step, loss)`` may return True to stop early.
    """
    state = state or AdamState(lr=opt.lr, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
    names = trainable if trainable is not None else params.names()
    curve = []
    t0 = time.perf_counter()
    for step in range(1, n_steps + 1):
        idx = next(index_stream)
        params.zero_grad()
        try:
            loss = loss_fn(idx)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteError("loss")
            backward(loss)
            grads = params.grads()
        except NonFiniteError as exc:
            raise DivergenceError(f"{stage}: non-finite value at step {step} ({exc})") from exc
        grads = {n: grads[n] for n in names}
        grads, norm = clip_global_norm(grads, opt.clip)
        adam_step(params, grads, state)
        curve.append(value)
        if log_every and (step % log_every == 0 or step == n_steps):
            log.info(json.dumps({"stage": stage, "step": step, "loss": round(value, 6),
                                 "grad_norm": round(norm, 6),
                                 "wall": round(time.perf_counter() - t0, 3)}))
        if on_step is not None and on_step(step, value):
            break
    return curve
