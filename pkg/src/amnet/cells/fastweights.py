"""Fast-weights baseline: scalar-decay outer-product memory with layer norm.

    A_t = lambda * A_{t-1} + eta * (h_t x h_t)
    h   <- layer_norm(tanh(W s_t + b + A_t h))   (repeated S times)

The decay and store rates are fixed scalars here; the learned-update cell
in :mod:`.weinet` generalizes exactly these two numbers into matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from ..engine import Tensor, constant, gaussian, ops, stream


@dataclass
class FastWeightsParams:
    hidden: int
    in_dim: int
    out_dim: int
    lam: float
    eta: float
    inner_steps: int
    w_in: Tensor
    b_in: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    w_out: Tensor
    b_out: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [
            ("w_in", self.w_in),
            ("b_in", self.b_in),
            ("ln_gain", self.ln_gain),
            ("ln_bias", self.ln_bias),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
        ]

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.tensors()]


@dataclass
class FastWeightsState:
    h: Tensor
    mem: Tensor  # [B, H*H]


def init_params(in_dim: int, hidden: int, out_dim: int, seed: int, *,
                lam: float = 0.9, eta: float = 0.5,
                inner_steps: int = 1) -> FastWeightsParams:
    if hidden < 1 or in_dim < 1 or out_dim < 1:
        raise ConfigError(f"dimensions must be >= 1, got H={hidden}, I={in_dim}, V={out_dim}")
    if inner_steps < 1:
        raise ConfigError(f"inner_steps must be >= 1, got {inner_steps}")
    rng = stream(seed, "init", "fastweights")
    g = lambda shape: gaussian(shape, 0.0, 0.1, rng, requires_grad=True)
    params = FastWeightsParams(
        hidden=hidden, in_dim=in_dim, out_dim=out_dim,
        lam=float(lam), eta=float(eta), inner_steps=inner_steps,
        w_in=g((hidden, in_dim)),
        b_in=g((hidden,)),
        ln_gain=constant((hidden,), 1.0, requires_grad=True),
        ln_bias=constant((hidden,), 0.0, requires_grad=True),
        w_out=g((out_dim, hidden)),
        b_out=g((out_dim,)),
    )
    for name, t in params.tensors():
        t.name = f"fastweights.{name}"
    return params


def init_state(params: FastWeightsParams, batch_size: int) -> FastWeightsState:
    h = params.hidden
    return FastWeightsState(
        h=constant((batch_size, h), 0.0),
        mem=constant((batch_size, h * h), 0.0),
    )


def fast_memory_update(mem: Tensor, h: Tensor, lam: float, eta: float) -> Tensor:
    """mem' = lam * mem + eta * (h x h), per example."""
    return ops.add(ops.scale(mem, lam), ops.scale(ops.batch_outer(h, h), eta))


def step(params: FastWeightsParams, state: FastWeightsState, s_t: Tensor
         ) -> tuple[FastWeightsState, Tensor]:
    """Update the memory with the incoming state, then refine the state
    through it S times."""
    mem = fast_memory_update(state.mem, state.h, params.lam, params.eta)
    drive = ops.add(ops.linear(s_t, params.w_in), params.b_in)
    h = state.h
    for _ in range(params.inner_steps):
        h = ops.layer_norm(
            ops.tanh(ops.add(drive, ops.mat_vec(mem, h))),
            params.ln_gain, params.ln_bias,
        )
    logits = ops.add(ops.linear(h, params.w_out), params.b_out)
    return FastWeightsState(h=h, mem=mem), logits
