"""Central finite-difference gradient oracle.

Independent of the tape: it only re-evaluates a loss function under
entrywise parameter perturbations, so it can certify (or indict) any
backward rule.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, OracleFailure
from .tensor import GradientMap, Tensor, no_grad

REL_ERR_FLOOR = 1e-6


def _loss_value(loss_fn: Callable, params: Sequence[Tensor]) -> float:
    with no_grad():
        value = loss_fn(params)
    if isinstance(value, Tensor):
        value = value.item()
    return float(value)


def finite_difference_gradient(
    loss_fn: Callable[[Sequence[Tensor]], "Tensor | float"],
    params: Sequence[Tensor],
    epsilon: float = 1e-5,
) -> GradientMap:
    """(f(p+eps) - f(p-eps)) / 2eps for every scalar entry of every param.

    `loss_fn` must be a pure, deterministic function of the parameter
    values. Parameters are perturbed in place and always restored.
    """
    if epsilon <= 0:
        raise ContractError(f"epsilon must be positive, got {epsilon}")
    result = GradientMap()
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        grad = np.zeros(flat.shape, dtype=np.float64)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            f_plus = _loss_value(loss_fn, params)
            flat[k] = orig - epsilon
            f_minus = _loss_value(loss_fn, params)
            flat[k] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                name = p.name or f"param{pi}"
                raise OracleFailure(
                    f"non-finite loss while perturbing {name}[{k}]: "
                    f"f+={f_plus}, f-={f_minus}"
                )
            grad[k] = (f_plus - f_minus) / (2.0 * epsilon)
        result[p] = Tensor(grad.reshape(p.shape), name=p.name)
    return result


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = REL_ERR_FLOOR) -> float:
    """Worst entrywise |a-b| / max(|a|, |b|, floor).

    The floor keeps near-zero entries from dominating: below it, central
    differences are mostly roundoff noise rather than signal.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))


def max_gradient_error(
    backprop: GradientMap, oracle: GradientMap, floor: float = REL_ERR_FLOOR
) -> dict[str, float]:
    """Per-parameter worst relative error between two gradient maps."""
    errors: dict[str, float] = {}
    for i, (param, g_fd) in enumerate(oracle.items()):
        g_bp = backprop.for_param(param)
        name = param.name or f"param{i}"
        errors[name] = relative_error(g_bp.data, g_fd.data, floor)
    return errors
