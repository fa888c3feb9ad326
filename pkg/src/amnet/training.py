"""BPTT training loop, evaluation, early stopping, metrics, checkpoints.

The loss is cross-entropy on the final timestep's logits only (the step
after the query key has been read). Each batch builds a fresh graph,
gradients are clipped elementwise, and Adam updates in place.

Checkpoint layout (little-endian): magic ``AMN1``, one format version
byte, the 64-bit config digest, the epoch as u32, then per parameter:
name length (u16), name bytes, rank (u8), one u32 per dim, and the raw
float32 payload.
"""

from __future__ import annotations

import hashlib
import math
import struct
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cells, recall
from .engine import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    clip_gradients,
    default_dtype,
    no_grad,
    ops,
    set_default_dtype,
)
from .errors import CheckpointError, ConfigError, ContractError, TrainingAborted

PRECISIONS = {"f32": np.float32, "f64": np.float64}


@dataclass
class TrainConfig:
    arch: str = "weinet"
    variant: str = "rowcol"
    hidden: int = 50
    k: int = 1
    router_enabled: bool = False
    reader_stats: str = "attention"
    fw_lambda: float = 0.9
    fw_eta: float = 0.5
    fw_inner_steps: int = 1
    length: int = 9
    train_size: int = 20000
    val_size: int = 2000
    test_size: int = 2000
    data_seed: int = 3
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_lo: float = -5.0
    clip_hi: float = 5.0
    batch_size: int = 128
    max_epochs: int = 100
    early_stop_accuracy: float = 0.99
    init_seed: int = 1
    shuffle_seed: int = 2
    precision: str = "f32"

    def validate(self) -> "TrainConfig":
        cells.get_family(self.arch)
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0.0 <= self.early_stop_accuracy <= 1.0:
            raise ConfigError(
                f"early_stop_accuracy must be in [0, 1], got {self.early_stop_accuracy}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.clip_lo < self.clip_hi:
            raise ConfigError(f"clip bounds must satisfy lo < hi, got "
                              f"[{self.clip_lo}, {self.clip_hi}]")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(PRECISIONS)}, "
                              f"got {self.precision!r}")
        # Fails fast on bad variant/k/router combinations.
        self.build_params()
        return self

    def model_kwargs(self) -> dict:
        if self.arch == "weinet":
            return dict(k=self.k, router_enabled=self.router_enabled,
                        variant=self.variant, reader_stats=self.reader_stats)
        if self.arch == "fastweights":
            return dict(lam=self.fw_lambda, eta=self.fw_eta,
                        inner_steps=self.fw_inner_steps)
        return {}

    def build_params(self):
        return cells.init_params(
            self.arch, recall.VOCAB_SIZE, self.hidden, recall.VOCAB_SIZE,
            seed=self.init_seed, **self.model_kwargs(),
        )

    def digest(self) -> int:
        """64-bit digest of the fields that fix parameter names and shapes."""
        core = (
            f"arch={self.arch} variant={self.variant} hidden={self.hidden} "
            f"k={self.k} router={self.router_enabled} reader_stats={self.reader_stats} "
            f"vocab={recall.VOCAB_SIZE}"
        )
        raw = hashlib.blake2b(core.encode(), digest_size=8).digest()
        return int.from_bytes(raw, "little")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    wall_time_s: float

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.split},{float(self.loss)!r},"
                f"{float(self.accuracy)!r},{self.wall_time_s:.3f}")


METRICS_HEADER = "epoch,split,loss,accuracy,wall_time_s"


class MetricsWriter:
    """Appends CSV rows as they are produced so aborts keep partial metrics."""

    def __init__(self, path: Path | str | None):
        self.path = Path(path) if path is not None else None
        self.records: list[MetricsRecord] = []
        if self.path is not None:
            self.path.write_text(METRICS_HEADER + "\n", encoding="utf-8")

    def write(self, record: MetricsRecord) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(record.csv_row() + "\n")


def _forward_sequence(family, params, inputs: np.ndarray) -> Tensor:
    """Unroll the cell over [B, T, I] inputs; returns final-step logits."""
    batch, steps = inputs.shape[0], inputs.shape[1]
    if steps < 1:
        raise ContractError("cells require at least one timestep")
    state = family.init_state(params, batch)
    logits = None
    for t in range(steps):
        state, logits = family.step(params, state, Tensor(inputs[:, t, :]))
    return logits


def train_epoch(params, opt_state: AdamState, train_split: recall.DatasetSplit,
                config: TrainConfig, epoch: int) -> MetricsRecord:
    """One pass over the training split; returns the aggregated metrics."""
    family = cells.get_family(config.arch)
    trainable = params.trainable()
    started = time.perf_counter()
    total_loss = 0.0
    total_correct = 0
    total_seen = 0
    for batch_index, (x, y) in enumerate(
        recall.batch_iter(train_split, config.batch_size, config.shuffle_seed, epoch)
    ):
        logits = _forward_sequence(family, params, x)
        loss = ops.cross_entropy(logits, y)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingAborted(
                f"non-finite loss {loss_value} at epoch {epoch}, batch {batch_index}",
                epoch=epoch, batch=batch_index,
            )
        grads = clip_gradients(backward(loss), config.clip_lo, config.clip_hi)
        adam_step(trainable, grads, opt_state)
        b = len(y)
        total_loss += loss_value * b
        total_correct += int((logits.data.argmax(axis=1) == y).sum())
        total_seen += b
    return MetricsRecord(
        epoch=epoch, split="train",
        loss=total_loss / total_seen,
        accuracy=total_correct / total_seen,
        wall_time_s=time.perf_counter() - started,
    )


def evaluate(params, split: recall.DatasetSplit, config: TrainConfig,
             epoch: int = 0) -> MetricsRecord:
    """Forward-only accuracy/loss on a split; mutates nothing."""
    if len(split) == 0:
        raise ContractError("evaluate on an empty split")
    family = cells.get_family(config.arch)
    started = time.perf_counter()
    indices, targets = split.index_arrays()
    eye = np.eye(recall.VOCAB_SIZE, dtype=default_dtype())
    total_loss = 0.0
    total_correct = 0
    with no_grad():
        for start in range(0, len(split), config.batch_size):
            rows = indices[start:start + config.batch_size]
            y = targets[start:start + config.batch_size]
            logits = _forward_sequence(family, params, eye[rows])
            total_loss += ops.cross_entropy(logits, y).item() * len(y)
            total_correct += int((logits.data.argmax(axis=1) == y).sum())
    return MetricsRecord(
        epoch=epoch, split=split.role,
        loss=total_loss / len(split),
        accuracy=total_correct / len(split),
        wall_time_s=time.perf_counter() - started,
    )


@dataclass
class ExperimentResult:
    config: TrainConfig
    history: list[MetricsRecord]
    epochs_to_converge: int | None
    test: MetricsRecord
    params: object = field(repr=False, default=None)

    @property
    def converged(self) -> bool:
        return self.epochs_to_converge is not None


def run_experiment(config: TrainConfig, out_dir: Path | str | None = None,
                   log=None) -> ExperimentResult:
    """Train with per-epoch validation until the early-stop accuracy or the
    epoch budget, then evaluate on test and checkpoint the final model."""
    config.validate()
    set_default_dtype(PRECISIONS[config.precision])
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    writer = MetricsWriter(out / "metrics.csv" if out is not None else None)

    train_split, val_split, test_split = recall.generate_splits(
        config.length, (config.train_size, config.val_size, config.test_size),
        config.data_seed,
    )
    params = config.build_params()
    opt_state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                          eps=config.eps)
    epochs_to_converge = None
    best_val = -1.0
    try:
        for epoch in range(1, config.max_epochs + 1):
            rec_train = train_epoch(params, opt_state, train_split, config, epoch)
            writer.write(rec_train)
            rec_val = evaluate(params, val_split, config, epoch)
            writer.write(rec_val)
            if log is not None:
                log(f"epoch {epoch:3d}  train loss {rec_train.loss:.4f} "
                    f"acc {rec_train.accuracy:.4f}  val acc {rec_val.accuracy:.4f}")
            if out is not None and rec_val.accuracy > best_val:
                best_val = rec_val.accuracy
                save_checkpoint(params, config, out / "checkpoint_best.amn", epoch)
            if rec_val.accuracy >= config.early_stop_accuracy:
                epochs_to_converge = epoch
                break
    except TrainingAborted:
        raise  # metrics already flushed row by row
    final_epoch = writer.records[-1].epoch if writer.records else 0
    rec_test = evaluate(params, test_split, config, final_epoch)
    writer.write(rec_test)
    if out is not None:
        save_checkpoint(params, config, out / "checkpoint_final.amn", final_epoch)
    return ExperimentResult(
        config=config, history=writer.records,
        epochs_to_converge=epochs_to_converge, test=rec_test, params=params,
    )


CHECKPOINT_MAGIC = b"AMN1"
CHECKPOINT_VERSION = 1


def save_checkpoint(params, config: TrainConfig, path: Path | str, epoch: int) -> None:
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<B", CHECKPOINT_VERSION)
    blob += struct.pack("<Q", config.digest())
    blob += struct.pack("<I", epoch)
    for name, tensor in params.tensors():
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
        blob += arr.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: Path | str, config: TrainConfig):
    """Rebuild params for `config` and fill them from the file.

    Refuses (without partial loads) on bad magic/version, truncation, or
    a config digest mismatch.
    """
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint "
                                  f"(wanted {n} bytes at offset {pos})")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = struct.unpack("<B", take(1))[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    found_digest = struct.unpack("<Q", take(8))[0]
    expected = config.digest()
    if found_digest != expected:
        raise CheckpointError(
            f"{path}: config digest mismatch: expected {expected:#018x}, "
            f"found {found_digest:#018x}"
        )
    epoch = struct.unpack("<I", take(4))[0]
    loaded: dict[str, np.ndarray] = {}
    while pos < len(raw):
        name_len = struct.unpack("<H", take(2))[0]
        name = bytes(take(name_len)).decode("utf-8")
        rank = struct.unpack("<B", take(1))[0]
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        loaded[name] = data
    params = config.build_params()
    names = [name for name, _ in params.tensors()]
    missing = [n for n in names if n not in loaded]
    extra = [n for n in loaded if n not in names]
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter set mismatch (missing {missing}, unexpected {extra})"
        )
    for name, tensor in params.tensors():
        if loaded[name].shape != tensor.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name}: expected {tensor.shape}, "
                f"found {loaded[name].shape}"
            )
        tensor.data = loaded[name].astype(tensor.data.dtype)
    return params, epoch
