"""AdamW with decoupled weight decay, warmup/linear-decay schedule, clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient for parameter {name!r}; step aborted")
        self.param = name


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def linear_warmup_decay(step: int, total_steps: int, peak_lr: float,
                        warmup_fraction: float = 0.1) -> float:
    """Linear ramp to ``peak_lr`` over the warmup steps, then linear decay to 0."""
    warmup = max(1, int(warmup_fraction * total_steps))
    if step < warmup:
        return peak_lr * (step + 1) / warmup
    return peak_lr * max(0.0, (total_steps - step) / max(1, total_steps - warmup))


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
               lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.01) -> None:
    """Update ``params`` in place.

    Gradients are validated before anything is touched, so a non-finite
    gradient leaves both parameters and optimizer state unchanged.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if weight_decay:
            p *= 1.0 - lr * weight_decay
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
