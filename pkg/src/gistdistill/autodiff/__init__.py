"""Minimal reverse-mode autodiff over numpy float64 arrays."""
import numpy as np

from .checkpoint import CheckpointError, checkpoint_hash, load_checkpoint, save_checkpoint
from .optim import AdamState, adam_step, clip_global_norm, global_norm
from .params import ParamSet
from .tensor import NonFiniteError, Tensor, backward


def softmax_t(logits, T: float = 1.0) -> np.ndarray:
    """Stable temperature softmax of a plain vector."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0:
        raise ValueError("softmax_t of an empty vector")
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("softmax_t")
    z = z / T
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


__all__ = [
    "AdamState", "CheckpointError", "NonFiniteError", "ParamSet", "Tensor",
    "adam_step", "backward", "checkpoint_hash", "clip_global_norm", "global_norm",
    "load_checkpoint", "save_checkpoint", "softmax_t",
]
