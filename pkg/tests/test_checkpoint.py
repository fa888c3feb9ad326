"""Checkpoint round trips and refusal modes."""

import numpy as np
import pytest

from amnet.errors import CheckpointError
from amnet.training import TrainConfig, load_checkpoint, save_checkpoint

CFG = TrainConfig(arch="weinet", hidden=7, precision="f32")


def test_round_trip_bit_exact_at_stored_precision(tmp_path):
    params = CFG.build_params()
    path = tmp_path / "model.amn"
    save_checkpoint(params, CFG, path, epoch=12)
    loaded, epoch = load_checkpoint(path, CFG)
    assert epoch == 12
    for (name_a, a), (name_b, b) in zip(params.tensors(), loaded.tensors()):
        assert name_a == name_b
        np.testing.assert_array_equal(a.data.astype("<f4"), b.data.astype("<f4"))


def test_truncated_file_refused_without_partial_load(tmp_path):
    params = CFG.build_params()
    path = tmp_path / "model.amn"
    save_checkpoint(params, CFG, path, epoch=1)
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) - 37])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path, CFG)


def test_bad_magic(tmp_path):
    path = tmp_path / "model.amn"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path, CFG)


def test_digest_mismatch_names_expected_and_found(tmp_path):
    params = CFG.build_params()
    path = tmp_path / "model.amn"
    save_checkpoint(params, CFG, path, epoch=1)
    other = TrainConfig(arch="weinet", hidden=9, precision="f32")
    with pytest.raises(CheckpointError, match="expected 0x.*found 0x"):
        load_checkpoint(path, other)


def test_digest_covers_variant_and_router():
    base = TrainConfig(arch="weinet")
    assert base.digest() != TrainConfig(arch="weinet", variant="gated").digest()
    assert base.digest() != TrainConfig(arch="weinet", k=2,
                                        router_enabled=True).digest()
    assert base.digest() != TrainConfig(arch="lstm").digest()
    assert base.digest() == TrainConfig(arch="weinet", lr=0.5).digest()
