"""Adam with bias correction, and elementwise gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ContractError
from .tensor import GradientMap, Tensor


@dataclass
class AdamState:
    """Per-parameter moment estimates plus shared hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        # lr = 0 is allowed (freezes parameters, used to test the harness).
        if self.lr < 0 or self.eps <= 0 or not (0 < self.beta1 < 1) or not (0 < self.beta2 < 1):
            raise ContractError(
                f"adam hyperparameters out of range: lr={self.lr}, beta1={self.beta1}, "
                f"beta2={self.beta2}, eps={self.eps}"
            )


def _param_key(param: Tensor, index: int) -> str:
    return param.name if param.name else f"param{index}"


def adam_step(params: Sequence[Tensor], grads: GradientMap, state: AdamState) -> AdamState:
    """One Adam update, in place on the parameter tensors."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        g = grads.for_param(p).data
        if g.shape != p.shape:
            raise ContractError(
                f"gradient shape {g.shape} != parameter shape {p.shape} "
                f"for {_param_key(p, i)}"
            )
        key = _param_key(p, i)
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def clip_gradients(grads: GradientMap, lo: float, hi: float) -> GradientMap:
    """Clamp every gradient entry into [lo, hi]."""
    if not lo < hi:
        raise ContractError(f"clip bounds must satisfy lo < hi, got [{lo}, {hi}]")
    clipped = GradientMap()
    for param, g in grads.items():
        clipped[param] = Tensor(np.clip(g.data, lo, hi), name=g.name)
    return clipped
