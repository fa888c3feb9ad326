"""Recurrent cells with learned auto-associative memory updates.

A small numpy-based stack: a reverse-mode autodiff engine with numba-
accelerated memory kernels, four recurrent cell families built on it,
a key-value recall benchmark, and a training/evaluation harness.
"""

__version__ = "0.1.0"

from . import engine, errors

__all__ = ["engine", "errors", "__version__"]
