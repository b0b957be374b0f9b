from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError


@dataclass
class AdamState:
    lr: float = 0.0005
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


def adam_step(params: dict, grads: dict, state: AdamState) -> AdamState:
    """Bias-corrected Adam, updating ``params`` tensors and ``state`` in place.

    The whole update is rejected if any gradient is non-finite.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
        if not np.all(np.isfinite(g.data)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1 - b1 ** state.t
    bc2 = 1 - b2 ** state.t
    for name, g in grads.items():
        p = params[name].data
        gd = g.data
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * gd
        v *= b2
        v += (1 - b2) * (gd * gd)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state
