"""Fast-weights, LSTM, and recurrent-highway baselines."""

import numpy as np
import pytest

from amnet import cells
from amnet.cells import fastweights, lstm, rhn
from amnet.engine import Tensor, stream
from amnet.errors import ConfigError

H, I, V = 6, 5, 8


def zero_all(params):
    for _, t in params.tensors():
        t.data = np.zeros_like(t.data)


class TestFastWeights:
    def test_zero_rates_reduce_to_memoryless_cell(self):
        params = cells.init_params("fastweights", I, H, V, seed=4, lam=0.0, eta=0.0)
        state = fastweights.init_state(params, 2)
        rng = stream(31, "fw-zero")
        s = Tensor(rng.normal(0, 1, size=(2, I)))
        new_state, _ = fastweights.step(params, state, s)
        assert not new_state.mem.data.any()
        drive = s.data @ params.w_in.data.T + params.b_in.data
        z = np.tanh(drive)
        mu = z.mean(axis=1, keepdims=True)
        var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
        expect = ((z - mu) / np.sqrt(var + 1e-5)) * params.ln_gain.data \
            + params.ln_bias.data
        np.testing.assert_allclose(new_state.h.data, expect, rtol=1e-10, atol=1e-12)

    def test_two_step_trajectory_matches_hand_unroll(self):
        lam, eta = 0.9, 0.5
        params = cells.init_params("fastweights", I, H, V, seed=5, lam=lam, eta=eta)
        state = fastweights.init_state(params, 1)
        rng = stream(32, "fw-unroll")
        inputs = rng.normal(0, 1, size=(2, 1, I))

        h = np.zeros((1, H))
        mem = np.zeros((H, H))
        for t in range(2):
            state, _ = fastweights.step(params, state, Tensor(inputs[t].copy()))
            # hand recurrence
            mem = lam * mem + eta * np.outer(h[0], h[0])
            z = np.tanh(inputs[t] @ params.w_in.data.T + params.b_in.data
                        + (mem @ h[0])[None, :])
            mu = z.mean(axis=1, keepdims=True)
            var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
            h = ((z - mu) / np.sqrt(var + 1e-5)) * params.ln_gain.data \
                + params.ln_bias.data
            np.testing.assert_allclose(state.mem.data.reshape(H, H), mem, atol=1e-12)
            np.testing.assert_allclose(state.h.data, h, atol=1e-12)

    def test_inner_steps_validated(self):
        with pytest.raises(ConfigError):
            cells.init_params("fastweights", I, H, V, seed=1, inner_steps=0)

    def test_multiple_inner_steps_refine_through_memory(self):
        p1 = cells.init_params("fastweights", I, H, V, seed=6, inner_steps=1)
        p3 = cells.init_params("fastweights", I, H, V, seed=6, inner_steps=3)
        rng = stream(33, "fw-inner")
        s = rng.normal(0, 1, size=(1, I))
        st1 = fastweights.init_state(p1, 1)
        st3 = fastweights.init_state(p3, 1)
        # warm one step so the memory is nonzero and refinement matters
        st1, _ = fastweights.step(p1, st1, Tensor(s.copy()))
        st3, _ = fastweights.step(p3, st3, Tensor(s.copy()))
        s2 = rng.normal(0, 1, size=(1, I))
        out1, _ = fastweights.step(p1, st1, Tensor(s2.copy()))
        out3, _ = fastweights.step(p3, st3, Tensor(s2.copy()))
        assert not np.allclose(out1.h.data, out3.h.data)


class TestLstm:
    def test_zero_parameters_halve_cell_state(self):
        params = cells.init_params("lstm", I, H, V, seed=7)
        zero_all(params)
        c_prev = np.linspace(-1.0, 1.0, H)[None, :]
        state = lstm.LstmState(h=Tensor(np.zeros((1, H))), c=Tensor(c_prev.copy()))
        new_state, _ = lstm.step(params, state, Tensor(np.ones((1, I))))
        np.testing.assert_allclose(new_state.c.data, 0.5 * c_prev, atol=1e-12)
        np.testing.assert_allclose(new_state.h.data, 0.5 * np.tanh(0.5 * c_prev),
                                   atol=1e-12)

    def test_saturated_forget_gate_carries_cell_state(self):
        params = cells.init_params("lstm", I, H, V, seed=8)
        b = np.zeros(4 * H)
        b[H:2 * H] = 50.0  # forget block
        params.w_gates.data = np.zeros_like(params.w_gates.data)
        params.b_gates.data = b
        c_prev = np.linspace(-1.0, 1.0, H)[None, :]
        state = lstm.LstmState(h=Tensor(np.zeros((1, H))), c=Tensor(c_prev.copy()))
        new_state, _ = lstm.step(params, state, Tensor(np.ones((1, I))))
        # i (.) g = 0.5 * tanh(0) = 0, so c ~ c_prev + i (.) g = c_prev
        np.testing.assert_allclose(new_state.c.data, c_prev, atol=1e-10)


class TestRhn:
    def test_zero_parameters_halve_state(self):
        params = cells.init_params("rhn", I, H, V, seed=9)
        zero_all(params)
        h_prev = np.linspace(-1.0, 1.0, H)[None, :]
        state = rhn.RhnState(h=Tensor(h_prev.copy()))
        new_state, _ = rhn.step(params, state, Tensor(np.ones((1, I))))
        np.testing.assert_allclose(new_state.h.data, 0.5 * h_prev, atol=1e-12)

    def test_saturated_gate_is_perfect_carry(self):
        params = cells.init_params("rhn", I, H, V, seed=10)
        zero_all(params)
        params.b_gate.data = np.full(H, 50.0)
        h_prev = np.linspace(-1.0, 1.0, H)[None, :]
        state = rhn.RhnState(h=Tensor(h_prev.copy()))
        new_state, _ = rhn.step(params, state, Tensor(np.ones((1, I))))
        np.testing.assert_allclose(new_state.h.data, h_prev, atol=1e-10)
