"""
Adam, warmup-cosine learning rate and gradient clipping.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from autodiff.params import ParameterStore


@dataclass
class AdamState:
    """First/second moments per parameter name plus the update counter."""
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def to_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"adam.m/{name}": arr for name, arr in self.m.items()}
        arrays.update({f"adam.v/{name}": arr for name, arr in self.v.items()})
        return arrays

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], t: int) -> "AdamState":
        state = cls(t=t)
        for key, arr in arrays.items():
            if key.startswith("adam.m/"):
                state.m[key[len("adam.m/"):]] = np.asarray(arr, dtype=np.float32).copy()
            elif key.startswith("adam.v/"):
                state.v[key[len("adam.v/"):]] = np.asarray(arr, dtype=np.float32).copy()
        return state


def adam_step(
    store: ParameterStore,
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    grads: Optional[Mapping[str, np.ndarray]] = None,
) -> None:
    """
    One bias-corrected Adam update, in place.

    ``grads`` defaults to each parameter's ``.grad``; missing gradients count
    as zero. The store's step counter advances with ``state.t``.
    """
    beta1, beta2 = betas
    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t

    for name, param in store.items():
        grad = grads.get(name) if grads is not None else param.grad
        if grad is None:
            grad = np.zeros_like(param.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name] = m.astype(param.dtype, copy=False)
        state.v[name] = v.astype(param.dtype, copy=False)
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        param.data = (param.data - update).astype(param.dtype, copy=False)

    store.step = state.t


def warmup_cosine(step: int, total_steps: int, peak_lr: float, warmup_fraction: float = 0.05) -> float:
    """Linear warmup over ``warmup_fraction`` of the run, then cosine decay to 0."""
    if total_steps <= 0:
        return peak_lr
    warmup = max(1, int(math.ceil(warmup_fraction * total_steps)))
    if step < warmup:
        return peak_lr * (step + 1) / warmup
    progress = min(1.0, (step - warmup) / max(1, total_steps - warmup))
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_grad_norm(store: ParameterStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = 0.0
    for param in store.parameters():
        if param.grad is not None:
            total += float(np.sum(param.grad.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        factor = max_norm / (norm + 1e-12)
        for param in store.parameters():
            if param.grad is not None:
                param.grad = param.grad * factor
    return norm
