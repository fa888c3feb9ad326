"""Differentiable primitives.

Elementwise and dense-algebra ops follow numpy conventions on rank-1/2
arrays. Row-wise ops (softmax, layer_norm, cross_entropy) treat a rank-2
input as a batch of independent row vectors. The ``batch_*`` and memory
ops work on batches packed as rank-2 arrays, with per-example H x H
memories flattened to rows of length H*H; their inner loops live in
:mod:`.kernels`.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import kernels
from .tensor import Tensor, record_op

LAYER_NORM_EPS = 1e-5


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _mem_view(a: Tensor, h_dim: int) -> np.ndarray:
    b, flat = a.shape
    if flat != h_dim * h_dim:
        raise ShapeError(f"memory row length {flat} does not match H={h_dim}")
    return a.data.reshape(b, h_dim, h_dim)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    # bwd may hand the incoming gradient itself to both parents.
    return record_op(Tensor(data), (a, b), bwd, fresh=False)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def bwd(g):
        return (g * c,)

    return record_op(out, (a,), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product with numpy broadcasting."""
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} do not broadcast") from None
    a_data, b_data = a.data, b.data

    def bwd(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return record_op(Tensor(data), (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product for rank combinations (2,2), (2,1), (1,2), (1,1)."""
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0:
        raise ShapeError("matmul does not accept scalars")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    data = ad @ bd

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad

    return record_op(Tensor(data), (a, b), bwd)


def linear(x: Tensor, w: Tensor) -> Tensor:
    """x @ w.T for a batch of rows: [B,F] x [H,F] -> [B,H]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: got x {x.shape}, w {w.shape}")
    xd, wd = x.data, w.data
    out = Tensor(xd @ wd.T)

    def bwd(g):
        return g @ wd, g.T @ xd

    return record_op(out, (x, w), bwd)


def outer(u: Tensor, v: Tensor) -> Tensor:
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeError(f"outer_product expects vectors, got {u.shape}, {v.shape}")
    ud, vd = u.data, v.data
    out = Tensor(np.outer(ud, vd))

    def bwd(g):
        return g @ vd, g.T @ ud

    return record_op(out, (u, v), bwd)


def concat(parts: list[Tensor]) -> Tensor:
    """Join vectors end to end, or matrices column-wise (rows = batch)."""
    if not parts:
        raise ShapeError("concat of zero tensors")
    ranks = {p.ndim for p in parts}
    if ranks == {1}:
        axis = 0
    elif ranks == {2}:
        axis = 1
        rows = {p.shape[0] for p in parts}
        if len(rows) != 1:
            raise ShapeError(f"concat: row counts differ: {sorted(rows)}")
    else:
        raise ShapeError("concat expects all-rank-1 or all-rank-2 inputs")
    widths = [p.shape[-1] for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + widths)

    def bwd(g):
        if axis == 0:
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return record_op(Tensor(data), tuple(parts), bwd, fresh=False)


def slice_cols(x: Tensor, j0: int, j1: int) -> Tensor:
    if x.ndim != 2 or not (0 <= j0 < j1 <= x.shape[1]):
        raise ShapeError(f"slice_cols({j0}:{j1}) on shape {x.shape}")
    out = Tensor(x.data[:, j0:j1].copy())
    shape = x.shape

    def bwd(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, j0:j1] = g
        return (full,)

    return record_op(out, (x,), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}")
    out = Tensor(x.data.reshape(shape))
    orig = x.shape

    def bwd(g):
        return (g.reshape(orig),)

    return record_op(out, (x,), bwd, fresh=False)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - out_data * out_data),)

    return record_op(Tensor(out_data), (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        return (g * out_data * (1.0 - out_data),)

    return record_op(Tensor(out_data), (x,), bwd)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Softmax over a vector, or over each row of a matrix."""
    if x.data.size == 0 or x.ndim == 0:
        raise ShapeError(f"softmax on shape {x.shape}")
    y = _softmax_rows(x.data)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return record_op(Tensor(y), (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Standardize each row to zero mean / unit variance, then scale and shift."""
    if x.data.size == 0 or x.ndim == 0:
        raise ShapeError(f"layer_norm on shape {x.shape}")
    n = x.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain/bias must have shape ({n},), got {gain.shape}, {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data)
    gd = gain.data

    def bwd(g):
        dxhat = g * gd
        dmean = dxhat.mean(axis=-1, keepdims=True)
        dproj = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - dmean - xhat * dproj)
        dgain = _unbroadcast(g * xhat, gain.shape)
        dbias = _unbroadcast(g, bias.shape)
        return dx, dgain, dbias

    return record_op(out, (x, gain, bias), bwd)


def row_mean(m: Tensor) -> Tensor:
    """Mean over columns of a matrix: one value per row."""
    if m.ndim != 2:
        raise ShapeError(f"row_mean expects a matrix, got {m.shape}")
    r, c = m.shape
    out = Tensor(m.data.mean(axis=1))

    def bwd(g):
        return (np.repeat(g[:, None] / c, c, axis=1),)

    return record_op(out, (m,), bwd)


def col_mean(m: Tensor) -> Tensor:
    """Mean over rows of a matrix: one value per column."""
    if m.ndim != 2:
        raise ShapeError(f"col_mean expects a matrix, got {m.shape}")
    r, c = m.shape
    out = Tensor(m.data.mean(axis=0))

    def bwd(g):
        return (np.repeat(g[None, :] / r, r, axis=0),)

    return record_op(out, (m,), bwd)


def bilinear(h: Tensor, a: Tensor) -> Tensor:
    """Quadratic form h' A h -> scalar."""
    if h.ndim != 1 or a.ndim != 2 or a.shape != (h.shape[0], h.shape[0]):
        raise ShapeError(f"bilinear: got h {h.shape}, A {a.shape}")
    hd, ad = h.data, a.data
    out = Tensor(np.asarray(hd @ ad @ hd))

    def bwd(g):
        return g * ((ad + ad.T) @ hd), g * np.outer(hd, hd)

    return record_op(out, (h, a), bwd)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer class targets.

    Accepts a single logit vector with one index, or a [B,V] batch with
    B indices (loss averaged over the batch).
    """
    idx = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if logits.ndim == 1:
        z = logits.data[None, :]
    elif logits.ndim == 2:
        z = logits.data
    else:
        raise ShapeError(f"cross_entropy on shape {logits.shape}")
    b, v = z.shape
    if idx.shape != (b,):
        raise ShapeError(f"cross_entropy: {b} rows but {idx.shape[0]} targets")
    if idx.min() < 0 or idx.max() >= v:
        raise ShapeError(f"cross_entropy: target out of range [0,{v})")
    probs = _softmax_rows(z)
    nll = -np.log(probs[np.arange(b), idx])
    out = Tensor(np.asarray(nll.mean(), dtype=z.dtype))

    def bwd(g):
        dz = probs.copy()
        dz[np.arange(b), idx] -= 1.0
        dz *= float(g) / b
        return (dz.reshape(logits.shape),)

    return record_op(out, (logits,), bwd)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))
    shape, dtype = x.shape, x.data.dtype

    def bwd(g):
        return (np.full(shape, float(g), dtype=dtype),)

    return record_op(out, (x,), bwd)


# --- batched memory ops (rows = examples, memories flattened to H*H) ---


def _check_batch_pair(h: Tensor, a: Tensor) -> int:
    if h.ndim != 2 or a.ndim != 2 or h.shape[0] != a.shape[0]:
        raise ShapeError(f"batch op: got state {h.shape}, memory {a.shape}")
    return h.shape[1]


def batch_outer(u: Tensor, v: Tensor) -> Tensor:
    """Row-wise outer products: [B,H],[B,H] -> [B,H*H]."""
    if u.shape != v.shape or u.ndim != 2:
        raise ShapeError(f"batch_outer: got {u.shape}, {v.shape}")
    b, n = u.shape
    ud, vd = u.data, v.data
    out = Tensor(kernels.active.outer_fwd(ud, vd).reshape(b, n * n))

    def bwd(g):
        return kernels.active.outer_bwd(g.reshape(b, n, n), ud, vd)

    return record_op(out, (u, v), bwd)


def vec_mat(h: Tensor, a: Tensor) -> Tensor:
    """Row-vector times per-example memory: out[b] = h[b] @ A[b]."""
    n = _check_batch_pair(h, a)
    av = _mem_view(a, n)
    hd = h.data
    out = Tensor(kernels.active.vecmat_fwd(hd, av))

    def bwd(g):
        dh, da = kernels.active.vecmat_bwd(g, hd, av)
        return dh, da.reshape(a.shape)

    return record_op(out, (h, a), bwd)


def mat_vec(a: Tensor, h: Tensor) -> Tensor:
    """Per-example memory times column vector: out[b] = A[b] @ h[b]."""
    n = _check_batch_pair(h, a)
    av = _mem_view(a, n)
    hd = h.data
    out = Tensor(kernels.active.matvec_fwd(av, hd))

    def bwd(g):
        da, dh = kernels.active.matvec_bwd(g, av, hd)
        return da.reshape(a.shape), dh

    return record_op(out, (a, h), bwd)


def batch_bilinear(h: Tensor, a: Tensor) -> Tensor:
    """Per-example quadratic form h' A h: [B,H],[B,H*H] -> [B,1]."""
    n = _check_batch_pair(h, a)
    av = _mem_view(a, n)
    hd = h.data
    out = Tensor(kernels.active.bilinear_fwd(hd, av)[:, None])

    def bwd(g):
        dh, da = kernels.active.bilinear_bwd(g[:, 0], hd, av)
        return dh, da.reshape(a.shape)

    return record_op(out, (h, a), bwd)


def mem_row_mean(a: Tensor, h_dim: int) -> Tensor:
    """Per-example row means of flattened memories: [B,H*H] -> [B,H]."""
    av = _mem_view(a, h_dim)

    def bwd(g):
        da = np.empty(av.shape, dtype=g.dtype)
        da[:] = g[:, :, None] / h_dim
        return (da.reshape(a.shape),)

    return record_op(Tensor(av.mean(axis=2)), (a,), bwd)


def mem_col_mean(a: Tensor, h_dim: int) -> Tensor:
    """Per-example column means of flattened memories: [B,H*H] -> [B,H]."""
    av = _mem_view(a, h_dim)

    def bwd(g):
        da = np.empty(av.shape, dtype=g.dtype)
        da[:] = g[:, None, :] / h_dim
        return (da.reshape(a.shape),)

    return record_op(Tensor(av.mean(axis=1)), (a,), bwd)


def read_stats(a: Tensor, h: Tensor) -> Tensor:
    """Fused [col means | row means | h'A] over one pooled memory: -> [B,3H].

    One scan of the memory yields the reader's three memory-derived
    pieces; callers slice out the parts they need so every path sees
    bit-identical values.
    """
    n = _check_batch_pair(h, a)
    av = _mem_view(a, n)
    hd = h.data
    inv = av.dtype.type(1.0 / n)
    out = Tensor(kernels.active.read_stats_fwd(av, hd, inv))

    def bwd(g):
        da, dh = kernels.active.read_stats_bwd(g, av, hd, inv)
        return da.reshape(a.shape), dh

    return record_op(out, (a, h), bwd)


def memory_write(a_prev: Tensor, h: Tensor, wa: Tensor, wh: Tensor, wah: Tensor) -> Tensor:
    """Fused decay-plus-store update of a batch of memories.

    out = wa (.) A + wh (.) (h x h) + wah (.) A (.) (h x h), elementwise
    per example with shared [H,H] weights.
    """
    n = _check_batch_pair(h, a_prev)
    for w in (wa, wh, wah):
        if w.shape != (n, n):
            raise ShapeError(f"memory_write: weight shape {w.shape} != ({n},{n})")
    av = _mem_view(a_prev, n)
    hd, wad, whd, wahd = h.data, wa.data, wh.data, wah.data
    out_data = kernels.active.update_fwd(av, hd, wad, whd, wahd)
    out = Tensor(out_data.reshape(a_prev.shape))

    def bwd(g):
        da, dh, dwa, dwh, dwah = kernels.active.update_bwd(
            g.reshape(av.shape), av, hd, wad, whd, wahd
        )
        return da.reshape(a_prev.shape), dh, dwa, dwh, dwah

    return record_op(out, (a_prev, h, wa, wh, wah), bwd)


def gated_memory_write(a_prev: Tensor, h: Tensor, wa: Tensor, wh: Tensor) -> Tensor:
    """Coupled-gate memory update: g = sigmoid(wa (.) A + wh (.) (h x h)),
    out = g (.) A + (1-g) (.) (h x h)."""
    n = _check_batch_pair(h, a_prev)
    for w in (wa, wh):
        if w.shape != (n, n):
            raise ShapeError(f"gated_memory_write: weight shape {w.shape} != ({n},{n})")
    av = _mem_view(a_prev, n)
    hd, wad, whd = h.data, wa.data, wh.data
    out_data, gate = kernels.active.gated_update_fwd(av, hd, wad, whd)
    out = Tensor(out_data.reshape(a_prev.shape))

    def bwd(g):
        da, dh, dwa, dwh = kernels.active.gated_update_bwd(
            g.reshape(av.shape), av, hd, wad, whd, gate
        )
        return da.reshape(a_prev.shape), dh, dwa, dwh

    return record_op(out, (a_prev, h, wa, wh), bwd)


def left_matmul_shared(w: Tensor, a: Tensor, h_dim: int) -> Tensor:
    """Shared matrix times each example memory: out[b] = W @ A[b]."""
    if w.shape != (h_dim, h_dim):
        raise ShapeError(f"left_matmul_shared: weight shape {w.shape} != ({h_dim},{h_dim})")
    av = _mem_view(a, h_dim)
    wd = w.data
    out = Tensor(np.matmul(wd, av).reshape(a.shape))

    def bwd(g):
        gv = g.reshape(av.shape)
        dw = np.einsum("bij,bkj->ik", gv, av)
        da = np.matmul(wd.T, gv)
        return dw, da.reshape(a.shape)

    return record_op(out, (w, a), bwd)


# Registry exposing every primitive by kind name.
OP_REGISTRY = {
    "add": add,
    "scale": scale,
    "hadamard": mul,
    "matmul": matmul,
    "linear": linear,
    "outer_product": outer,
    "concat": concat,
    "slice_cols": slice_cols,
    "reshape": reshape,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "row_mean": row_mean,
    "col_mean": col_mean,
    "bilinear": bilinear,
    "cross_entropy": cross_entropy,
    "sum": sum_all,
    "batch_outer": batch_outer,
    "vec_mat": vec_mat,
    "mat_vec": mat_vec,
    "batch_bilinear": batch_bilinear,
    "mem_row_mean": mem_row_mean,
    "mem_col_mean": mem_col_mean,
    "read_stats": read_stats,
    "memory_write": memory_write,
    "gated_memory_write": gated_memory_write,
    "left_matmul_shared": left_matmul_shared,
}


def apply(kind: str, *args, **kwargs):
    """Dispatch a primitive by kind name (conformance/verification surface)."""
    try:
        fn = OP_REGISTRY[kind]
    except KeyError:
        raise ShapeError(
            f"unknown op kind {kind!r}; known: {', '.join(sorted(OP_REGISTRY))}"
        ) from None
    return fn(*args, **kwargs)
