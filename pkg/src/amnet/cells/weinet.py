"""WeiNet: a recurrent cell whose per-sequence memory update is learned.

Instead of decaying an outer-product memory with fixed scalars, every
memory entry gets its own learned decay/store/cross-talk coefficients:

    A_t = W_A (.) A_{t-1} + W_h (.) (h_t x h_t) + W_AH (.) A_{t-1} (.) (h_t x h_t)

The cell composes: a tanh controller over [input; previous reader output;
previous hidden], the memory update above for each of K memory blocks,
an optional softmax router over the blocks, a read h' A, and a reader
that mixes the read with memory row/column statistics, layer-normalized.

All step functions are batched: rows of every rank-2 argument are
independent sequences, and each H x H memory is flattened to a row of
length H*H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, ShapeError
from ..engine import Tensor, constant, gaussian, ops, stream
from ..engine.tensor import default_dtype

VARIANTS = ("fullmatrix", "rowcol", "gated", "crossbitdot")
READER_STATS = ("attention", "update_gain")

# Initialization means for the update weights; decay near 1, store near 1/2.
DECAY_INIT_MEAN = 0.9
STORE_INIT_MEAN = 0.5
INIT_STD = 0.1
FACTOR_STD = 0.05


@dataclass
class WeiNetParams:
    hidden: int
    in_dim: int
    out_dim: int
    k: int
    variant: str
    router_enabled: bool
    reader_stats: str
    w_ctrl: Tensor
    w_read: Tensor
    w_route: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    w_out: Tensor
    b_out: Tensor
    # fullmatrix / gated / crossbitdot update weights
    w_a: Tensor | None = None
    w_h: Tensor | None = None
    w_ah: Tensor | None = None
    # rowcol factor vectors (materialized as column x row outer products)
    w_a_c: Tensor | None = None
    w_a_r: Tensor | None = None
    w_h_c: Tensor | None = None
    w_h_r: Tensor | None = None
    w_ah_c: Tensor | None = None
    w_ah_r: Tensor | None = None

    def tensors(self) -> list[tuple[str, Tensor]]:
        named = [
            ("w_ctrl", self.w_ctrl),
            ("w_read", self.w_read),
            ("w_route", self.w_route),
            ("ln_gain", self.ln_gain),
            ("ln_bias", self.ln_bias),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
        ]
        for name in ("w_a", "w_h", "w_ah", "w_a_c", "w_a_r",
                     "w_h_c", "w_h_r", "w_ah_c", "w_ah_r"):
            t = getattr(self, name)
            if t is not None:
                named.append((name, t))
        return named

    def trainable(self) -> list[Tensor]:
        skip = set() if self.router_enabled else {"w_route"}
        return [t for name, t in self.tensors() if name not in skip]


@dataclass
class WeiNetState:
    h: Tensor
    e: Tensor
    mems: list[Tensor] = field(default_factory=list)
    a: Tensor | None = None


def init_params(in_dim: int, hidden: int, out_dim: int, seed: int, *,
                k: int = 1, router_enabled: bool = False,
                variant: str = "rowcol",
                reader_stats: str = "attention") -> WeiNetParams:
    """Draw parameters: update weights around their decay/store means,
    everything else N(0, 0.1), layer-norm at identity."""
    if hidden < 1 or in_dim < 1 or out_dim < 1:
        raise ConfigError(f"dimensions must be >= 1, got H={hidden}, I={in_dim}, V={out_dim}")
    if k < 1:
        raise ConfigError(f"memory count must be >= 1, got {k}")
    if not router_enabled and k != 1:
        raise ConfigError(f"router disabled requires a single memory block, got k={k}")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown update variant {variant!r}; valid: {', '.join(VARIANTS)}")
    if reader_stats not in READER_STATS:
        raise ConfigError(
            f"unknown reader_stats {reader_stats!r}; valid: {', '.join(READER_STATS)}"
        )

    rng = stream(seed, "init", "weinet")
    g = lambda shape, mean=0.0, std=INIT_STD: gaussian(shape, mean, std, rng, requires_grad=True)

    params = WeiNetParams(
        hidden=hidden, in_dim=in_dim, out_dim=out_dim, k=k,
        variant=variant, router_enabled=router_enabled, reader_stats=reader_stats,
        w_ctrl=g((hidden, in_dim + 2 * hidden)),
        w_read=g((hidden, 5 * hidden)),
        w_route=g((k,)),
        ln_gain=constant((hidden,), 1.0, requires_grad=True),
        ln_bias=constant((hidden,), 0.0, requires_grad=True),
        w_out=g((out_dim, hidden)),
        b_out=g((out_dim,)),
    )
    if variant in ("fullmatrix", "crossbitdot"):
        params.w_a = g((hidden, hidden), DECAY_INIT_MEAN)
        params.w_h = g((hidden, hidden), STORE_INIT_MEAN)
        params.w_ah = g((hidden, hidden), 0.0)
    elif variant == "gated":
        params.w_a = g((hidden, hidden), DECAY_INIT_MEAN)
        params.w_h = g((hidden, hidden), STORE_INIT_MEAN)
    else:  # rowcol: factor pairs whose outer products match the target means
        params.w_a_c = g((hidden,), math.sqrt(DECAY_INIT_MEAN), FACTOR_STD)
        params.w_a_r = g((hidden,), math.sqrt(DECAY_INIT_MEAN), FACTOR_STD)
        params.w_h_c = g((hidden,), math.sqrt(STORE_INIT_MEAN), FACTOR_STD)
        params.w_h_r = g((hidden,), math.sqrt(STORE_INIT_MEAN), FACTOR_STD)
        params.w_ah_c = g((hidden,), 0.0, INIT_STD)
        params.w_ah_r = g((hidden,), 1.0, FACTOR_STD)
    for name, t in params.tensors():
        t.name = f"weinet.{name}"
    return params


def init_state(params: WeiNetParams, batch_size: int) -> WeiNetState:
    """Zero memories and states; uniform attention over the K blocks."""
    h = params.hidden
    return WeiNetState(
        h=constant((batch_size, h), 0.0),
        e=constant((batch_size, h), 0.0),
        mems=[constant((batch_size, h * h), 0.0) for _ in range(params.k)],
        a=constant((batch_size, params.k), 1.0 / params.k),
    )


def controller_step(params: WeiNetParams, s_t: Tensor, e_prev: Tensor,
                    h_prev: Tensor) -> Tensor:
    """h_t = tanh(W_ctrl [s_t; e_{t-1}; h_{t-1}])."""
    return ops.tanh(ops.linear(ops.concat([s_t, e_prev, h_prev]), params.w_ctrl))


def update_weights(params: WeiNetParams) -> tuple[Tensor, Tensor, Tensor | None]:
    """Materialize the (decay, store, cross-talk) weight matrices for the variant."""
    if params.variant == "rowcol":
        return (
            ops.outer(params.w_a_c, params.w_a_r),
            ops.outer(params.w_h_c, params.w_h_r),
            ops.outer(params.w_ah_c, params.w_ah_r),
        )
    return params.w_a, params.w_h, params.w_ah


def memory_update(params: WeiNetParams, a_prev: Tensor, h_t: Tensor) -> Tensor:
    """One memory block's update under the configured variant."""
    wa, wh, wah = update_weights(params)
    if params.variant in ("fullmatrix", "rowcol"):
        return ops.memory_write(a_prev, h_t, wa, wh, wah)
    if params.variant == "gated":
        return ops.gated_memory_write(a_prev, h_t, wa, wh)
    if params.variant == "crossbitdot":
        hdim = params.hidden
        o = ops.batch_outer(h_t, h_t)
        wah_flat = ops.reshape(wah, (1, hdim * hdim))
        return ops.add(
            ops.add(
                ops.left_matmul_shared(wa, a_prev, hdim),
                ops.left_matmul_shared(wh, o, hdim),
            ),
            ops.mul(ops.mul(a_prev, o), wah_flat),
        )
    raise ConfigError(f"unknown update variant {params.variant!r}")


def route(params: WeiNetParams, mems: list[Tensor], h_t: Tensor,
          a_prev: Tensor) -> Tensor:
    """a_t = softmax([h'A^1 h, ..., h'A^K h] + w (.) a_{t-1})."""
    if not params.router_enabled:
        raise ContractError("route called with the router disabled")
    if len(mems) == 0:
        raise ConfigError("route requires at least one memory block")
    scores = ops.concat([ops.batch_bilinear(h_t, mem) for mem in mems])
    return ops.softmax(ops.add(scores, ops.mul(params.w_route, a_prev)))


def _attention_weighted(mems: list[Tensor], a_t: Tensor) -> Tensor:
    """sum_k a^k A^k. With one block the attention is exactly [1.0] (it is
    a probability vector), so the block itself is returned unscaled."""
    if a_t.ndim != 2 or a_t.shape[1] != len(mems):
        raise ShapeError(f"attention shape {a_t.shape} does not match {len(mems)} memories")
    if len(mems) == 1:
        return mems[0]
    total = ops.mul(mems[0], ops.slice_cols(a_t, 0, 1))
    for kk in range(1, len(mems)):
        total = ops.add(total, ops.mul(mems[kk], ops.slice_cols(a_t, kk, kk + 1)))
    return total


def memory_read(mems: list[Tensor], a_t: Tensor, h_t: Tensor) -> Tensor:
    """m_t = h_t' (sum_k a_t^k A^k): retrieve with the state as the cue."""
    hdim = h_t.shape[1]
    block = ops.read_stats(_attention_weighted(mems, a_t), h_t)
    return ops.slice_cols(block, 2 * hdim, 3 * hdim)


def _reader_pool(params: WeiNetParams, mems: list[Tensor], a_t: Tensor) -> Tensor:
    if params.reader_stats == "attention":
        return _attention_weighted(mems, a_t)
    # Alternative weighting of the blocks by the decay matrix itself.
    hdim = params.hidden
    wa_flat = ops.reshape(update_weights(params)[0], (1, hdim * hdim))
    total = ops.mul(mems[0], wa_flat)
    for mem in mems[1:]:
        total = ops.add(total, ops.mul(mem, wa_flat))
    return ops.scale(total, 1.0 / len(mems))


def reader_step(params: WeiNetParams, e_prev: Tensor, mems: list[Tensor],
                a_t: Tensor, m_t: Tensor, h_t: Tensor) -> Tensor:
    """e_t = layer_norm(tanh(W_read [e_{t-1}; Ac_t; Ar_t; m_t; h_t]))."""
    pooled = _reader_pool(params, mems, a_t)
    hdim = params.hidden
    stats = ops.slice_cols(ops.read_stats(pooled, h_t), 0, 2 * hdim)  # [Ac | Ar]
    return _reader_tail(params, [e_prev, stats, m_t, h_t])


def _reader_tail(params: WeiNetParams, pieces: list[Tensor]) -> Tensor:
    e_raw = ops.tanh(ops.linear(ops.concat(pieces), params.w_read))
    return ops.layer_norm(e_raw, params.ln_gain, params.ln_bias)


def output_logits(params: WeiNetParams, e_t: Tensor) -> Tensor:
    return ops.add(ops.linear(e_t, params.w_out), params.b_out)


def step(params: WeiNetParams, state: WeiNetState, s_t: Tensor
         ) -> tuple[WeiNetState, Tensor]:
    """One timestep: controller, update every block, route, read, read out.

    The router sees the already-updated memories; with K=1 (or the router
    disabled) the attention is exactly 1.0 and the paths coincide. The
    attention-pooled memory is computed once and shared by the read and
    the reader statistics, which is value-identical to chaining the
    public sub-operations.
    """
    h_t = controller_step(params, s_t, state.e, state.h)
    mems = [memory_update(params, mem, h_t) for mem in state.mems]
    if params.router_enabled:
        a_t = route(params, mems, h_t, state.a)
    else:
        a_t = constant((h_t.shape[0], 1), 1.0)
    if params.reader_stats == "attention":
        # One fused scan gives [Ac | Ar | m]; the memory_read + reader_step
        # composition slices the same kernel's output, so values match
        # bit for bit while this path walks the memory once.
        stats_m = ops.read_stats(_attention_weighted(mems, a_t), h_t)
        e_t = _reader_tail(params, [state.e, stats_m, h_t])
    else:
        m_t = memory_read(mems, a_t, h_t)
        e_t = reader_step(params, state.e, mems, a_t, m_t, h_t)
    logits = output_logits(params, e_t)
    return WeiNetState(h=h_t, e=e_t, mems=mems, a=a_t), logits


def unrolled_memory_closed_form(w_a: np.ndarray, w_h: np.ndarray,
                                hs: np.ndarray,
                                w_ah: np.ndarray | None = None) -> np.ndarray:
    """Closed form of T memory updates without cross-talk, from A_0 = 0:

        A_T = W_h (.) sum_t W_A^(.(T-t)) (.) (h_t x h_t)

    with elementwise powers (the newest term undecayed). Only valid in
    the zero-cross-talk regime; serves as an oracle for the recurrence.
    """
    if w_ah is not None and np.any(np.asarray(w_ah) != 0):
        raise ContractError("closed form only covers the zero cross-talk regime")
    w_a = np.asarray(w_a, dtype=np.float64)
    w_h = np.asarray(w_h, dtype=np.float64)
    hs = np.asarray(hs, dtype=np.float64)
    big_t = hs.shape[0]
    acc = np.zeros_like(w_a)
    for t in range(1, big_t + 1):
        h = hs[t - 1]
        acc += w_a ** (big_t - t) * np.outer(h, h)
    return w_h * acc
