"""Adam, global-norm gradient clipping and the step learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grad import frozen_tensors, global_norm
from .numeric import DivergenceError


def clip_gradients(grads: dict[str, np.ndarray], clip: float) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients by ``clip / norm`` when the global L2 norm exceeds ``clip``.

    ``clip == 0`` disables clipping.  Returns the (possibly scaled) gradients
    and the pre-clip norm; scaling happens in place.
    """
    if clip < 0:
        raise ValueError(f"clip must be >= 0, got {clip}")
    norm = global_norm(grads)
    if clip > 0 and norm > clip:
        scale = clip / norm
        for g in grads.values():
            g *= g.dtype.type(scale)
    return grads, norm


@dataclass
class LrSchedule:
    """Divide the base rate by ``drop_rate`` every ``drop_epoch`` epochs."""

    base: float
    drop_rate: float = 1.0
    drop_epoch: int = 1

    def __post_init__(self):
        if self.drop_rate < 1:
            raise ValueError(f"drop_rate must be >= 1, got {self.drop_rate}")
        if self.drop_epoch <= 0:
            raise ValueError(f"drop_epoch must be > 0, got {self.drop_epoch}")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    return schedule.base * schedule.drop_rate ** (-(epoch // schedule.drop_epoch))


@dataclass
class OptState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip: float = 0.0
    frozen: tuple[str, ...] = ()
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: OptState, params, grads: dict[str, np.ndarray], lr_now: float | None = None) -> None:
    """One bias-corrected Adam update applied in place to ``params.tensors()``.

    Tensors in frozen groups are left bit-identical (their moments are not
    even allocated).
    """
    lr = state.lr if lr_now is None else lr_now
    skip = frozen_tensors(state.frozen)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    step_size = lr / c1
    sqrt_c2 = math.sqrt(c2)
    for name, p in params.tensors().items():
        if name in skip:
            continue
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = step_size * m / (np.sqrt(v) / sqrt_c2 + state.eps)
        if not np.all(np.isfinite(update)):
            raise DivergenceError(f"non-finite Adam update for {name!r}")
        p -= update.astype(p.dtype, copy=False)
