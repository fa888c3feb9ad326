"""Standard LSTM baseline (no peephole connections).

Gates are computed jointly from [s_t; h_{t-1}] with one packed weight
matrix in (input, forget, candidate, output) order.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from ..engine import Tensor, constant, gaussian, ops, stream


@dataclass
class LstmParams:
    hidden: int
    in_dim: int
    out_dim: int
    w_gates: Tensor  # [4H, I+H]
    b_gates: Tensor  # [4H]
    w_out: Tensor
    b_out: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("w_gates", self.w_gates),
            ("b_gates", self.b_gates),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
        ]

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.tensors()]


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


def init_params(in_dim: int, hidden: int, out_dim: int, seed: int) -> LstmParams:
    if hidden < 1 or in_dim < 1 or out_dim < 1:
        raise ConfigError(f"dimensions must be >= 1, got H={hidden}, I={in_dim}, V={out_dim}")
    rng = stream(seed, "init", "lstm")
    g = lambda shape: gaussian(shape, 0.0, 0.1, rng, requires_grad=True)
    params = LstmParams(
        hidden=hidden, in_dim=in_dim, out_dim=out_dim,
        w_gates=g((4 * hidden, in_dim + hidden)),
        b_gates=g((4 * hidden,)),
        w_out=g((out_dim, hidden)),
        b_out=g((out_dim,)),
    )
    for name, t in params.tensors():
        t.name = f"lstm.{name}"
    return params


def init_state(params: LstmParams, batch_size: int) -> LstmState:
    h = params.hidden
    return LstmState(
        h=constant((batch_size, h), 0.0),
        c=constant((batch_size, h), 0.0),
    )


def step(params: LstmParams, state: LstmState, s_t: Tensor
         ) -> tuple[LstmState, Tensor]:
    hdim = params.hidden
    z = ops.add(ops.linear(ops.concat([s_t, state.h]), params.w_gates), params.b_gates)
    gate_i = ops.sigmoid(ops.slice_cols(z, 0, hdim))
    gate_f = ops.sigmoid(ops.slice_cols(z, hdim, 2 * hdim))
    cand = ops.tanh(ops.slice_cols(z, 2 * hdim, 3 * hdim))
    gate_o = ops.sigmoid(ops.slice_cols(z, 3 * hdim, 4 * hdim))
    c = ops.add(ops.mul(gate_f, state.c), ops.mul(gate_i, cand))
    h = ops.mul(gate_o, ops.tanh(c))
    logits = ops.add(ops.linear(h, params.w_out), params.b_out)
    return LstmState(h=h, c=c), logits
