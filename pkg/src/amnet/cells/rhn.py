"""Single-layer recurrent highway baseline with coupled gates:

    c = tanh(W_c [s; h] + b_c)
    g = sigmoid(W_g [s; h] + b_g)
    h' = g (.) h + (1 - g) (.) c
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..engine import Tensor, constant, gaussian, ops, stream


@dataclass
class RhnParams:
    hidden: int
    in_dim: int
    out_dim: int
    w_cand: Tensor
    b_cand: Tensor
    w_gate: Tensor
    b_gate: Tensor
    w_out: Tensor
    b_out: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("w_cand", self.w_cand),
            ("b_cand", self.b_cand),
            ("w_gate", self.w_gate),
            ("b_gate", self.b_gate),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
        ]

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.tensors()]


@dataclass
class RhnState:
    h: Tensor


def init_params(in_dim: int, hidden: int, out_dim: int, seed: int) -> RhnParams:
    if hidden < 1 or in_dim < 1 or out_dim < 1:
        raise ConfigError(f"dimensions must be >= 1, got H={hidden}, I={in_dim}, V={out_dim}")
    rng = stream(seed, "init", "rhn")
    g = lambda shape: gaussian(shape, 0.0, 0.1, rng, requires_grad=True)
    params = RhnParams(
        hidden=hidden, in_dim=in_dim, out_dim=out_dim,
        w_cand=g((hidden, in_dim + hidden)),
        b_cand=g((hidden,)),
        w_gate=g((hidden, in_dim + hidden)),
        b_gate=g((hidden,)),
        w_out=g((out_dim, hidden)),
        b_out=g((out_dim,)),
    )
    for name, t in params.tensors():
        t.name = f"rhn.{name}"
    return params


def init_state(params: RhnParams, batch_size: int) -> RhnState:
    return RhnState(h=constant((batch_size, params.hidden), 0.0))


def step(params: RhnParams, state: RhnState, s_t: Tensor) -> tuple[RhnState, Tensor]:
    joint = ops.concat([s_t, state.h])
    cand = ops.tanh(ops.add(ops.linear(joint, params.w_cand), params.b_cand))
    gate = ops.sigmoid(ops.add(ops.linear(joint, params.w_gate), params.b_gate))
    ones = Tensor(np.ones_like(gate.data))
    carry = ops.add(ones, ops.scale(gate, -1.0))
    h = ops.add(ops.mul(gate, state.h), ops.mul(carry, cand))
    logits = ops.add(ops.linear(h, params.w_out), params.b_out)
    return RhnState(h=h), logits
