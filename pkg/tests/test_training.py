"""Training loop, evaluation, and experiment bookkeeping."""

import hashlib

import numpy as np
import pytest

from amnet import cells, recall
from amnet.cells import lstm
from amnet.engine import AdamState, GradientMap, Tensor, adam_step, set_default_dtype
from amnet.errors import ContractError, TrainingAborted
from amnet.training import (
    MetricsRecord,
    TrainConfig,
    evaluate,
    run_experiment,
    train_epoch,
)

TINY = dict(hidden=8, length=9, train_size=64, val_size=32, test_size=32,
            batch_size=16, max_epochs=2, precision="f64")


def _hash_params(params) -> str:
    digest = hashlib.blake2b(digest_size=16)
    for name, t in params.tensors():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(t.data).tobytes())
    return digest.hexdigest()


class TestTrainEpoch:
    def test_zero_lr_leaves_parameters_unchanged(self):
        config = TrainConfig(arch="rhn", lr=0.0, **TINY)
        train, _, _ = recall.generate_splits(9, (64, 32, 32), config.data_seed)
        params = config.build_params()
        before = _hash_params(params)
        opt = AdamState(lr=0.0)
        rec = train_epoch(params, opt, train, config, epoch=1)
        assert _hash_params(params) == before
        # with frozen parameters the training loss equals the evaluation loss
        ev = evaluate(params, train, config)
        assert abs(rec.loss - ev.loss) < 1e-9

    def test_single_example_descent(self):
        config = TrainConfig(arch="weinet", variant="fullmatrix", hidden=6,
                             length=9, train_size=1, val_size=1, test_size=1,
                             batch_size=1, max_epochs=1, precision="f64",
                             lr=1e-2)
        train, _, _ = recall.generate_splits(9, (1, 1, 1), config.data_seed)
        params = config.build_params()
        opt = AdamState(lr=config.lr)
        before = evaluate(params, train, config).loss
        train_epoch(params, opt, train, config, epoch=1)
        after = evaluate(params, train, config).loss
        assert after < before

    def test_gradient_spike_clipped_to_lr_scale(self):
        config = TrainConfig(arch="rhn", **TINY)
        params = config.build_params()
        trainable = params.trainable()
        before = {id(p): p.data.copy() for p in trainable}
        from amnet.engine import clip_gradients
        spike = GradientMap()
        for p in trainable:
            spike[p] = Tensor(np.full(p.shape, 1e6), name=p.name)
        clipped = clip_gradients(spike, config.clip_lo, config.clip_hi)
        adam_step(trainable, clipped, AdamState(lr=config.lr))
        for p in trainable:
            delta = np.abs(p.data - before[id(p)]).max()
            assert delta <= config.lr * 1.5  # lr * O(1) despite the 1e6 spike

    def test_non_finite_loss_aborts_with_diagnostics(self):
        config = TrainConfig(arch="rhn", **TINY)
        train, _, _ = recall.generate_splits(9, (64, 32, 32), config.data_seed)
        params = config.build_params()
        params.w_out.data[:] = np.inf
        with pytest.raises(TrainingAborted) as err:
            train_epoch(params, AdamState(lr=config.lr), train, config, epoch=3)
        assert err.value.epoch == 3
        assert err.value.batch == 0


class TestEvaluate:
    def test_untrained_model_near_chance(self):
        config = TrainConfig(arch="weinet", precision="f64", hidden=20,
                             length=9, train_size=8, val_size=8, test_size=512)
        _, _, test = recall.generate_splits(9, (8, 8, 512), config.data_seed)
        params = config.build_params()
        rec = evaluate(params, test, config)
        assert 0.0 <= rec.accuracy <= 0.2

    def test_deterministic_and_side_effect_free(self):
        config = TrainConfig(arch="lstm", **TINY)
        _, val, _ = recall.generate_splits(9, (64, 32, 32), config.data_seed)
        params = config.build_params()
        before = _hash_params(params)
        r1 = evaluate(params, val, config)
        r2 = evaluate(params, val, config)
        assert (r1.loss, r1.accuracy) == (r2.loss, r2.accuracy)
        assert _hash_params(params) == before

    def test_empty_split_rejected(self):
        config = TrainConfig(arch="lstm", **TINY)
        _, val, _ = recall.generate_splits(9, (64, 32, 32), config.data_seed)
        val.examples = []
        val._indices = None
        with pytest.raises(ContractError):
            evaluate(params=config.build_params(), split=val, config=config)

    def test_hand_built_lstm_solves_single_pair_probe(self):
        """Weights that accumulate the (single) digit token into the cell
        state and map digit coordinates to digit classes score 1.0."""
        set_default_dtype(np.float64)
        hidden = 10  # one unit per digit
        config = TrainConfig(arch="lstm", hidden=hidden, length=5,
                             train_size=4, val_size=4, test_size=400,
                             precision="f64", batch_size=64)
        _, _, test = recall.generate_splits(5, (4, 4, 400), config.data_seed,
                                            pair_count=1)
        params = cells.init_params("lstm", recall.VOCAB_SIZE, hidden,
                                   recall.VOCAB_SIZE, seed=1)
        w = np.zeros_like(params.w_gates.data)
        b = np.zeros_like(params.b_gates.data)
        big = 50.0
        # input gate opens only on digit tokens
        digit_cols = slice(26, 36)
        b[0:hidden] = -big
        w[0:hidden, digit_cols] = 2 * big
        # forget gate always open, output gate always open
        b[hidden:2 * hidden] = big
        b[3 * hidden:4 * hidden] = big
        # candidate writes the digit identity: unit d fires for digit d
        w[2 * hidden:3 * hidden, digit_cols] = big * np.eye(10)
        params.w_gates.data = w
        params.b_gates.data = b
        w_out = np.zeros_like(params.w_out.data)
        w_out[26:36, :] = 10.0 * np.eye(10)
        params.w_out.data = w_out
        params.b_out.data = np.zeros_like(params.b_out.data)
        rec = evaluate(params, test, config)
        assert rec.accuracy == 1.0


class TestRunExperiment:
    def test_zero_threshold_stops_after_first_epoch(self, tmp_path):
        config = TrainConfig(arch="rhn", early_stop_accuracy=0.0, **TINY)
        result = run_experiment(config, out_dir=tmp_path)
        assert result.epochs_to_converge == 1
        # 1 epoch x (train+val) + final test
        assert len(result.history) == 3

    def test_history_row_count(self, tmp_path):
        config = TrainConfig(arch="rhn", **TINY)
        result = run_experiment(config, out_dir=tmp_path)
        epochs_run = max(r.epoch for r in result.history)
        assert len(result.history) == 2 * epochs_run + 1
        assert result.history[-1].split == "test"
        text = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert text[0] == "epoch,split,loss,accuracy,wall_time_s"
        assert len(text) == len(result.history) + 1

    def test_epochs_to_converge_rederivable_from_history(self, tmp_path):
        config = TrainConfig(arch="rhn", early_stop_accuracy=0.0, **TINY)
        result = run_experiment(config, out_dir=tmp_path)
        val_rows = [r for r in result.history if r.split == "val"]
        derived = min((r.epoch for r in val_rows
                       if r.accuracy >= config.early_stop_accuracy), default=None)
        assert derived == result.epochs_to_converge

    def test_metrics_record_fields_valid(self, tmp_path):
        config = TrainConfig(arch="lstm", **TINY)
        result = run_experiment(config, out_dir=tmp_path)
        for rec in result.history:
            assert 0.0 <= rec.accuracy <= 1.0
            assert rec.loss >= 0.0
            assert rec.split in ("train", "val", "test")
