"""Verification suites behind the `gradcheck` and `oracle` CLI commands.

Everything here runs in float64 and checks the trained code paths against
independent references: central finite differences for every cell's full
T-step BPTT gradient, the closed-form memory unroll against the step
recurrence, and the degeneracy of the learned update to the scalar
fast-weights rule under constant weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cells
from .engine import (
    Tensor,
    backward,
    constant,
    finite_difference_gradient,
    max_gradient_error,
    ops,
    stream,
    using_dtype,
    zeros,
)
from .cells.fastweights import fast_memory_update
from .cells.weinet import unrolled_memory_closed_form

GRADCHECK_TOL = 1e-4
CLOSED_FORM_TOL = 1e-10
DEGENERACY_TOL = 1e-12

GRADCHECK_COMBOS = [
    ("weinet-fullmatrix", "weinet", dict(variant="fullmatrix")),
    ("weinet-rowcol", "weinet", dict(variant="rowcol")),
    ("weinet-gated", "weinet", dict(variant="gated")),
    ("fastweights", "fastweights", {}),
    ("lstm", "lstm", {}),
    ("rhn", "rhn", {}),
    ("weinet-router-k2", "weinet", dict(variant="rowcol", k=2, router_enabled=True)),
]


@dataclass
class GradcheckRow:
    combo: str
    param: str
    rel_err: float

    @property
    def passed(self) -> bool:
        return self.rel_err < GRADCHECK_TOL


def gradcheck_cell(arch: str, model_kwargs: dict, *, hidden: int = 6,
                   in_dim: int = 5, out_dim: int = 7, steps: int = 4,
                   batch: int = 2, seed: int = 11,
                   epsilon: float = 1e-5) -> dict[str, float]:
    """Worst per-parameter relative error of BPTT vs finite differences
    for one T-step unrolled cross-entropy loss."""
    with using_dtype(np.float64):
        family = cells.get_family(arch)
        params = cells.init_params(arch, in_dim, hidden, out_dim, seed=seed,
                                   **model_kwargs)
        rng = stream(seed, "gradcheck", arch, *sorted(model_kwargs.items()))
        inputs = rng.normal(0.0, 1.0, size=(steps, batch, in_dim))
        targets = rng.integers(0, out_dim, size=batch)

        def loss_fn(_params):
            state = family.init_state(params, batch)
            logits = None
            for t in range(steps):
                state, logits = family.step(params, state, Tensor(inputs[t]))
            return ops.cross_entropy(logits, targets)

        trainable = params.trainable()
        bp = backward(loss_fn(trainable))
        fd = finite_difference_gradient(loss_fn, trainable, epsilon)
        raw = max_gradient_error(bp, fd)
    # Strip the family prefix for reporting.
    return {name.split(".", 1)[-1]: err for name, err in raw.items()}


def gradcheck_suite(combos=None) -> list[GradcheckRow]:
    rows = []
    for label, arch, kwargs in (combos or GRADCHECK_COMBOS):
        for param, err in gradcheck_cell(arch, kwargs).items():
            rows.append(GradcheckRow(combo=label, param=param, rel_err=err))
    return rows


@dataclass
class OracleRow:
    suite: str
    case: str
    max_abs_diff: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_abs_diff < self.tolerance


def _recurrent_memory(wa: np.ndarray, wh: np.ndarray, hs: np.ndarray) -> np.ndarray:
    """T applications of the learned update with zero cross-talk, A_0 = 0."""
    hdim = hs.shape[1]
    wa_t = Tensor(np.asarray(wa, dtype=np.float64))
    wh_t = Tensor(np.asarray(wh, dtype=np.float64))
    wah_t = zeros((hdim, hdim))
    mem = zeros((1, hdim * hdim))
    for h in hs:
        mem = ops.memory_write(mem, Tensor(h[None, :].astype(np.float64)),
                               wa_t, wh_t, wah_t)
    return mem.data.reshape(hdim, hdim)


def closed_form_suite(cases: int = 50, seed: int = 5) -> list[OracleRow]:
    """Closed-form unroll vs the step recurrence on random instances."""
    rng = stream(seed, "oracle", "closed_form")
    rows = []
    with using_dtype(np.float64):
        for case in range(cases):
            # First case pinned to the T=20 stress size.
            steps = 20 if case == 0 else int(rng.integers(1, 21))
            hdim = 8 if case == 0 else int(rng.integers(2, 9))
            wa = rng.normal(0.9, 0.1, size=(hdim, hdim))
            wh = rng.normal(0.5, 0.1, size=(hdim, hdim))
            hs = rng.normal(0.0, 1.0, size=(steps, hdim))
            closed = unrolled_memory_closed_form(wa, wh, hs)
            recurrent = _recurrent_memory(wa, wh, hs)
            diff = float(np.max(np.abs(closed - recurrent)))
            rows.append(OracleRow("closed_form", f"T={steps} H={hdim}", diff,
                                  CLOSED_FORM_TOL))
    return rows


def degeneracy_suite(steps: int = 50, hidden: int = 10, seed: int = 6,
                     lam: float = 0.9, eta: float = 0.5) -> list[OracleRow]:
    """With constant decay/store weights and no cross-talk, the learned
    update must trace the scalar fast-weights memory exactly."""
    rng = stream(seed, "oracle", "degeneracy")
    rows = []
    with using_dtype(np.float64):
        hs = rng.normal(0.0, 1.0, size=(steps, hidden))
        wa = constant((hidden, hidden), lam)
        wh = constant((hidden, hidden), eta)
        wah = zeros((hidden, hidden))
        learned = zeros((1, hidden * hidden))
        scalar = zeros((1, hidden * hidden))
        worst = 0.0
        for t, h in enumerate(hs):
            h_t = Tensor(h[None, :].astype(np.float64))
            learned = ops.memory_write(learned, h_t, wa, wh, wah)
            scalar = fast_memory_update(scalar, h_t, lam, eta)
            worst = max(worst, float(np.max(np.abs(learned.data - scalar.data))))
        rows.append(OracleRow("degeneracy", f"T={steps} H={hidden} "
                              f"lam={lam} eta={eta}", worst, DEGENERACY_TOL))
    return rows


def oracle_suite() -> list[OracleRow]:
    return closed_form_suite() + degeneracy_suite()


def format_gradcheck_report(rows: list[GradcheckRow]) -> str:
    lines = ["combo                 parameter     rel_err      status"]
    combos: dict[str, float] = {}
    for row in rows:
        combos[row.combo] = max(combos.get(row.combo, 0.0), row.rel_err)
        lines.append(f"{row.combo:<21s} {row.param:<13s} {row.rel_err:<12.3e} "
                     f"{'pass' if row.passed else 'FAIL'}")
    lines.append("")
    for combo, worst in combos.items():
        status = "pass" if worst < GRADCHECK_TOL else "FAIL"
        lines.append(f"{combo:<21s} worst {worst:.3e}  {status} (tol {GRADCHECK_TOL:g})")
    return "\n".join(lines)


def format_oracle_report(rows: list[OracleRow]) -> str:
    lines = ["suite        case                            max_abs_diff  tolerance  status"]
    for row in rows:
        lines.append(f"{row.suite:<12s} {row.case:<31s} {row.max_abs_diff:<13.3e} "
                     f"{row.tolerance:<10.0e} {'pass' if row.passed else 'FAIL'}")
    return "\n".join(lines)
