"""Hot inner-loop kernels for the batched memory ops.

Two interchangeable backends compute the same functions: a vectorized
numpy one and a numba-jitted one with fused loops (no temporaries).
The active backend is chosen at import time from the ``AMNET_KERNELS``
environment variable: ``auto`` (default, numba when importable),
``numba``, or ``numpy``. Both backends are importable side by side for
parity tests and ``benchmarks/kernel_bench.py``.

All kernels take batch-major arrays: memories are [B, H, H] views of the
engine's flat [B, H*H] tensors, states are [B, H]. The numba loops use
fastmath, so the two backends agree to float rounding, not bitwise; a
run must stay on one backend to be bit-reproducible. Scalars that enter
inner loops (like 1/H) are passed in pre-cast so float32 data is never
promoted mid-loop.
"""

from __future__ import annotations

import os

import numpy as np

# workqueue is the fork-safe threading layer; compare --jobs forks workers.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")


class NumpyKernels:
    """Vectorized reference implementations."""

    name = "numpy"

    @staticmethod
    def update_fwd(a_prev, h, wa, wh, wah):
        o = h[:, :, None] * h[:, None, :]
        return wa * a_prev + wh * o + wah * (a_prev * o)

    @staticmethod
    def update_bwd(g, a_prev, h, wa, wh, wah):
        o = h[:, :, None] * h[:, None, :]
        da = g * (wa + wah * o)
        dwa = (g * a_prev).sum(axis=0)
        dwh = (g * o).sum(axis=0)
        dwah = (g * (a_prev * o)).sum(axis=0)
        m = g * (wh + wah * a_prev)
        dh = np.einsum("bij,bj->bi", m, h) + np.einsum("bij,bi->bj", m, h)
        return da, dh, dwa, dwh, dwah

    @staticmethod
    def gated_update_fwd(a_prev, h, wa, wh):
        o = h[:, :, None] * h[:, None, :]
        gate = 1.0 / (1.0 + np.exp(-(wa * a_prev + wh * o)))
        return gate * a_prev + (1.0 - gate) * o, gate

    @staticmethod
    def gated_update_bwd(g, a_prev, h, wa, wh, gate):
        o = h[:, :, None] * h[:, None, :]
        dz = g * (a_prev - o) * gate * (1.0 - gate)
        da = g * gate + dz * wa
        dwa = (dz * a_prev).sum(axis=0)
        dwh = (dz * o).sum(axis=0)
        m = g * (1.0 - gate) + dz * wh
        dh = np.einsum("bij,bj->bi", m, h) + np.einsum("bij,bi->bj", m, h)
        return da, dh, dwa, dwh

    @staticmethod
    def outer_fwd(u, v):
        return u[:, :, None] * v[:, None, :]

    @staticmethod
    def outer_bwd(g, u, v):
        du = np.einsum("bij,bj->bi", g, v)
        dv = np.einsum("bij,bi->bj", g, u)
        return du, dv

    @staticmethod
    def vecmat_fwd(h, a):
        return np.einsum("bi,bij->bj", h, a)

    @staticmethod
    def vecmat_bwd(g, h, a):
        dh = np.einsum("bj,bij->bi", g, a)
        da = h[:, :, None] * g[:, None, :]
        return dh, da

    @staticmethod
    def matvec_fwd(a, h):
        return np.einsum("bij,bj->bi", a, h)

    @staticmethod
    def matvec_bwd(g, a, h):
        da = g[:, :, None] * h[:, None, :]
        dh = np.einsum("bi,bij->bj", g, a)
        return da, dh

    @staticmethod
    def bilinear_fwd(h, a):
        return np.einsum("bi,bij,bj->b", h, a, h)

    @staticmethod
    def bilinear_bwd(g, h, a):
        dh = g[:, None] * (
            np.einsum("bij,bj->bi", a, h) + np.einsum("bij,bi->bj", a, h)
        )
        da = g[:, None, None] * (h[:, :, None] * h[:, None, :])
        return dh, da

    @staticmethod
    def read_stats_fwd(a, h, inv):
        # [col means | row means | h' A] in one [B, 3H] block
        return np.concatenate(
            [a.sum(axis=1) * inv, a.sum(axis=2) * inv,
             np.einsum("bi,bij->bj", h, a)], axis=1,
        )

    @staticmethod
    def read_stats_bwd(g, a, h, inv):
        nh = h.shape[1]
        gcol = g[:, :nh]
        grow = g[:, nh:2 * nh]
        gm = g[:, 2 * nh:]
        da = (gcol[:, None, :] * inv + grow[:, :, None] * inv) \
            + h[:, :, None] * gm[:, None, :]
        dh = np.einsum("bj,bij->bi", gm, a)
        return da, dh


def _build_numba_kernels():
    from numba import njit

    @njit(cache=True, fastmath=True)
    def update_fwd(a_prev, h, wa, wh, wah):
        nb, nh = h.shape
        out = np.empty_like(a_prev)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                for j in range(nh):
                    o = hi * h[b, j]
                    a = a_prev[b, i, j]
                    out[b, i, j] = wa[i, j] * a + wh[i, j] * o + wah[i, j] * (a * o)
        return out

    @njit(cache=True, fastmath=True)
    def update_bwd(g, a_prev, h, wa, wh, wah):
        nb, nh = h.shape
        da = np.empty_like(a_prev)
        dh = np.zeros_like(h)
        dwa = np.zeros_like(wa)
        dwh = np.zeros_like(wh)
        dwah = np.zeros_like(wah)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                acc = h[b, i] * 0
                for j in range(nh):
                    gg = g[b, i, j]
                    a = a_prev[b, i, j]
                    o = hi * h[b, j]
                    da[b, i, j] = gg * (wa[i, j] + wah[i, j] * o)
                    dwa[i, j] += gg * a
                    dwh[i, j] += gg * o
                    dwah[i, j] += gg * (a * o)
                    m = gg * (wh[i, j] + wah[i, j] * a)
                    acc += m * h[b, j]
                    dh[b, j] += m * hi
                dh[b, i] += acc
        return da, dh, dwa, dwh, dwah

    @njit(cache=True)
    def gated_update_fwd(a_prev, h, wa, wh):
        nb, nh = h.shape
        out = np.empty_like(a_prev)
        gate = np.empty_like(a_prev)
        for b in range(nb):
            for i in range(nh):
                for j in range(nh):
                    o = h[b, i] * h[b, j]
                    a = a_prev[b, i, j]
                    s = 1.0 / (1.0 + np.exp(-(wa[i, j] * a + wh[i, j] * o)))
                    gate[b, i, j] = s
                    out[b, i, j] = s * a + (1.0 - s) * o
        return out, gate

    @njit(cache=True)
    def gated_update_bwd(g, a_prev, h, wa, wh, gate):
        nb, nh = h.shape
        da = np.empty_like(a_prev)
        dh = np.zeros_like(h)
        dwa = np.zeros_like(wa)
        dwh = np.zeros_like(wh)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                acc = h[b, i] * 0
                for j in range(nh):
                    gg = g[b, i, j]
                    a = a_prev[b, i, j]
                    o = hi * h[b, j]
                    s = gate[b, i, j]
                    dz = gg * (a - o) * s * (1.0 - s)
                    da[b, i, j] = gg * s + dz * wa[i, j]
                    dwa[i, j] += dz * a
                    dwh[i, j] += dz * o
                    m = gg * (1.0 - s) + dz * wh[i, j]
                    acc += m * h[b, j]
                    dh[b, j] += m * hi
                dh[b, i] += acc
        return da, dh, dwa, dwh

    @njit(cache=True, fastmath=True)
    def outer_fwd(u, v):
        nb, nh = u.shape
        out = np.empty((nb, nh, nh), dtype=u.dtype)
        for b in range(nb):
            for i in range(nh):
                ui = u[b, i]
                for j in range(nh):
                    out[b, i, j] = ui * v[b, j]
        return out

    @njit(cache=True, fastmath=True)
    def outer_bwd(g, u, v):
        nb, nh = u.shape
        du = np.zeros_like(u)
        dv = np.zeros_like(v)
        for b in range(nb):
            for i in range(nh):
                ui = u[b, i]
                acc = u[b, i] * 0
                for j in range(nh):
                    gg = g[b, i, j]
                    acc += gg * v[b, j]
                    dv[b, j] += gg * ui
                du[b, i] += acc
        return du, dv

    @njit(cache=True, fastmath=True)
    def vecmat_fwd(h, a):
        nb, nh = h.shape
        out = np.zeros_like(h)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                for j in range(nh):
                    out[b, j] += hi * a[b, i, j]
        return out

    @njit(cache=True, fastmath=True)
    def vecmat_bwd(g, h, a):
        nb, nh = h.shape
        dh = np.zeros_like(h)
        da = np.empty_like(a)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                acc = h[b, i] * 0
                for j in range(nh):
                    acc += g[b, j] * a[b, i, j]
                    da[b, i, j] = hi * g[b, j]
                dh[b, i] = acc
        return dh, da

    @njit(cache=True, fastmath=True)
    def matvec_fwd(a, h):
        nb, nh = h.shape
        out = np.zeros_like(h)
        for b in range(nb):
            for i in range(nh):
                acc = h[b, i] * 0
                for j in range(nh):
                    acc += a[b, i, j] * h[b, j]
                out[b, i] = acc
        return out

    @njit(cache=True, fastmath=True)
    def matvec_bwd(g, a, h):
        nb, nh = h.shape
        da = np.empty_like(a)
        dh = np.zeros_like(h)
        for b in range(nb):
            for i in range(nh):
                gi = g[b, i]
                for j in range(nh):
                    da[b, i, j] = gi * h[b, j]
                    dh[b, j] += gi * a[b, i, j]
        return da, dh

    @njit(cache=True, fastmath=True)
    def bilinear_fwd(h, a):
        nb, nh = h.shape
        out = np.zeros(nb, dtype=h.dtype)
        for b in range(nb):
            acc = h[b, 0] * 0
            for i in range(nh):
                row = h[b, 0] * 0
                for j in range(nh):
                    row += a[b, i, j] * h[b, j]
                acc += h[b, i] * row
            out[b] = acc
        return out

    @njit(cache=True, fastmath=True)
    def bilinear_bwd(g, h, a):
        nb, nh = h.shape
        dh = np.zeros_like(h)
        da = np.empty_like(a)
        for b in range(nb):
            gb = g[b]
            for i in range(nh):
                hi = h[b, i]
                acc = h[b, i] * 0
                for j in range(nh):
                    da[b, i, j] = gb * hi * h[b, j]
                    acc += a[b, i, j] * h[b, j]
                    dh[b, j] += gb * a[b, i, j] * hi
                dh[b, i] += gb * acc
        return dh, da

    @njit(cache=True, fastmath=True)
    def read_stats_fwd(a, h, inv):
        nb, nh = h.shape
        out = np.zeros((nb, 3 * nh), dtype=a.dtype)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                racc = out[b, nh + i]
                for j in range(nh):
                    v = a[b, i, j]
                    out[b, j] += v
                    racc += v
                    out[b, 2 * nh + j] += hi * v
                out[b, nh + i] = racc
            for j in range(2 * nh):
                out[b, j] *= inv
        return out

    @njit(cache=True, fastmath=True)
    def read_stats_bwd(g, a, h, inv):
        nb, nh = h.shape
        da = np.empty_like(a)
        dh = np.zeros_like(h)
        for b in range(nb):
            for i in range(nh):
                hi = h[b, i]
                gi = g[b, nh + i] * inv
                acc = h[b, i] * 0
                for j in range(nh):
                    gm = g[b, 2 * nh + j]
                    da[b, i, j] = g[b, j] * inv + gi + hi * gm
                    acc += gm * a[b, i, j]
                dh[b, i] = acc
        return da, dh

    class NumbaKernels:
        pass

    NumbaKernels.name = "numba"
    for fn in (
        update_fwd, update_bwd, gated_update_fwd, gated_update_bwd,
        outer_fwd, outer_bwd, vecmat_fwd, vecmat_bwd,
        matvec_fwd, matvec_bwd, bilinear_fwd, bilinear_bwd,
        read_stats_fwd, read_stats_bwd,
    ):
        setattr(NumbaKernels, fn.py_func.__name__, staticmethod(fn))
    return NumbaKernels


_numba_backend = None
_numba_error: Exception | None = None


def get_backend(name: str):
    """Return the kernel backend class for ``name`` ("numpy" or "numba")."""
    global _numba_backend, _numba_error
    if name == "numpy":
        return NumpyKernels
    if name == "numba":
        if _numba_backend is None:
            if _numba_error is not None:
                raise _numba_error
            try:
                _numba_backend = _build_numba_kernels()
            except ImportError as exc:
                _numba_error = exc
                raise
        return _numba_backend
    raise ValueError(f"unknown kernel backend {name!r} (use 'numpy' or 'numba')")


def _select_active():
    choice = os.environ.get("AMNET_KERNELS", "auto").lower()
    if choice == "numpy":
        return NumpyKernels
    if choice == "numba":
        return get_backend("numba")
    if choice == "auto":
        try:
            return get_backend("numba")
        except ImportError:
            return NumpyKernels
    raise ValueError(
        f"AMNET_KERNELS={choice!r} not recognized (use 'auto', 'numba' or 'numpy')"
    )


active = _select_active()


def backend_name() -> str:
    return active.name
