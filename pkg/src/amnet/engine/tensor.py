"""Dense rank-0/1/2 tensors recorded on a reverse-mode tape.

The tape is thread-local: one thread records one graph at a time, and
``backward`` consumes the whole tape (each training step builds a fresh
graph). Tensors that are not produced by recorded ops and do not have
``requires_grad`` set are treated as constants during differentiation.

Precision is a process-global setting: freshly built tensors use the
default dtype (float64 for oracle/test work, float32 for training runs),
while ops follow the dtype of their inputs.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, ShapeError
from .random import stream

_DEFAULT_DTYPE = np.float64

_state = threading.local()


def _tls():
    if not hasattr(_state, "tape"):
        _state.tape = []
        _state.grad_enabled = True
    return _state


def set_default_dtype(dtype) -> None:
    """Set the process-wide dtype for newly built tensors (f32 or f64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dtype}; use float32 or float64")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def using_dtype(dtype):
    """Temporarily switch the default tensor dtype."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """A dense array plus its position in the recorded graph."""

    __slots__ = ("data", "requires_grad", "name", "node_id", "_tracked")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, np.ndarray):
            arr = data
        else:
            arr = np.asarray(data, dtype=_DEFAULT_DTYPE)
        if arr.ndim > 2:
            raise ShapeError(f"rank {arr.ndim} tensors are not supported (max rank 2)")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.node_id: int | None = None
        self._tracked = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A constant view of the same data, cut out of the graph."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.data.dtype})"


class _Node:
    __slots__ = ("out", "parents", "bwd", "fresh")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], bwd: Callable,
                 fresh: bool):
        self.out = out
        self.parents = parents
        self.bwd = bwd
        self.fresh = fresh


def grad_enabled() -> bool:
    return _tls().grad_enabled


@contextmanager
def no_grad():
    """Disable tape recording (forward-only evaluation)."""
    st = _tls()
    prev = st.grad_enabled
    st.grad_enabled = False
    try:
        yield
    finally:
        st.grad_enabled = prev


def record_op(out: Tensor, parents: Sequence[Tensor], bwd: Callable,
              fresh: bool = True) -> Tensor:
    """Attach `out` to the tape when any parent participates in the graph.

    `bwd(grad_out)` must return one gradient array per parent (None to
    skip). Pass ``fresh=False`` when any returned array can alias another
    array (a view of the incoming gradient, or the same buffer for two
    parents); fresh arrays may be accumulated into in place.
    """
    st = _tls()
    if st.grad_enabled and any(p._tracked or p.requires_grad for p in parents):
        out._tracked = True
        out.node_id = len(st.tape)
        st.tape.append(_Node(out, tuple(parents), bwd, fresh))
    return out


class GradientMap(dict):
    """Maps each reachable `requires_grad` leaf tensor to its gradient tensor."""

    def for_param(self, param: Tensor) -> Tensor:
        try:
            return self[param]
        except KeyError:
            raise ContractError(
                f"no gradient recorded for parameter {param.name or '<unnamed>'}"
            ) from None


def backward(loss: Tensor) -> GradientMap:
    """Reverse-sweep the tape from `loss`; frees the tape afterwards.

    Gradients accumulate across shared subexpressions, so a parameter
    used at T timesteps receives the sum of its T contributions.
    """
    st = _tls()
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss._tracked or loss.node_id is None:
        raise ContractError("loss was not produced by recorded forward ops")

    # id -> (grad array, owned). Only owned buffers (freshly allocated by
    # an op's backward, or by an accumulation here) are mutated in place.
    grads: dict[int, list] = {id(loss): [np.ones_like(loss.data), True]}
    live = {id(loss): loss}
    result = GradientMap()
    tape = st.tape
    try:
        for idx in range(loss.node_id, -1, -1):
            node = tape[idx]
            entry = grads.pop(id(node.out), None)
            if entry is None:
                continue
            live.pop(id(node.out), None)
            parts = node.bwd(entry[0])
            for parent, pg in zip(node.parents, parts):
                if pg is None or not (parent._tracked or parent.requires_grad):
                    continue
                key = id(parent)
                slot = grads.get(key)
                if slot is None:
                    grads[key] = [pg, node.fresh]
                    live[key] = parent
                elif slot[1]:
                    np.add(slot[0], pg, out=slot[0])
                else:
                    slot[0] = slot[0] + pg
                    slot[1] = True
        for key, (g, _) in grads.items():
            leaf = live[key]
            if leaf.requires_grad:
                result[leaf] = Tensor(g, name=leaf.name)
    finally:
        tape.clear()
    return result


def _check_dims(shape: Iterable[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if len(dims) > 2:
        raise ShapeError(f"rank {len(dims)} tensors are not supported (max rank 2)")
    if any(d <= 0 for d in dims):
        raise ShapeError(f"dimensions must be positive, got {dims}")
    return dims


def zeros(shape, requires_grad: bool = False, name: str | None = None) -> Tensor:
    dims = _check_dims(shape)
    return Tensor(np.zeros(dims, dtype=_DEFAULT_DTYPE), requires_grad, name)


def constant(shape, value: float, requires_grad: bool = False, name: str | None = None) -> Tensor:
    dims = _check_dims(shape)
    return Tensor(np.full(dims, value, dtype=_DEFAULT_DTYPE), requires_grad, name)


def gaussian(shape, mean: float, std: float, rng, requires_grad: bool = False,
             name: str | None = None) -> Tensor:
    """Normal init; `rng` is a Generator or an integer seed."""
    dims = _check_dims(shape)
    if std < 0:
        raise ContractError(f"std must be nonnegative, got {std}")
    if isinstance(rng, (int, np.integer)):
        rng = stream(int(rng), "gaussian")
    data = rng.normal(mean, std, size=dims).astype(_DEFAULT_DTYPE)
    return Tensor(data, requires_grad, name)
