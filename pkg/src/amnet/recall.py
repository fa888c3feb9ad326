"""Key-value recall benchmark.

An example is R letter-digit pairs, a "??" separator, and one query key
drawn from the pairs; the answer is the digit paired with the query:

    c9k8j3f1??k  ->  8

Tokens live in a 37-symbol alphabet ('a'-'z', '0'-'9', '?') and are fed
one-hot. Nominal lengths 9/30/50 map to R = 3/13/23 pairs; for 30 and 50
the core sequence is one token short of the nominal step count, so a
single leading '?' pad is prepended at encoding time.

Generation is a pure function of the seed: train/val/test draw from
disjoint named substreams, and examples are drawn in bulk with
vectorized sampling so regeneration is cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .engine.random import stream
from .engine.tensor import default_dtype
from .errors import ConfigError, ContractError

LETTERS = "abcdefghijklmnopqrstuvwxyz"
DIGITS = "0123456789"
PAD = "?"
ALPHABET = LETTERS + DIGITS + PAD
VOCAB_SIZE = len(ALPHABET)  # 37
_INDEX = {ch: i for i, ch in enumerate(ALPHABET)}

NOMINAL_LENGTHS = (9, 30, 50)


def symbol_index(ch: str) -> int:
    try:
        return _INDEX[ch]
    except KeyError:
        raise ConfigError(f"symbol {ch!r} is outside the task alphabet") from None


def pair_count_for_length(length: int) -> int:
    """R such that the core sequence 2R+3 fits the nominal length."""
    if length not in NOMINAL_LENGTHS:
        raise ConfigError(
            f"unsupported nominal length {length}; supported: {NOMINAL_LENGTHS} "
            "(pass an explicit pair count to override)"
        )
    return (length - 3) // 2


@dataclass(frozen=True)
class RecallExample:
    tokens: str  # R pairs + '??' + query, no padding
    target: str  # one digit

    @property
    def pair_count(self) -> int:
        return (len(self.tokens) - 3) // 2


def make_example(pairs: list[tuple[str, str]], query: str) -> RecallExample:
    """Build an example from explicit (key, value) pairs and a query key."""
    keys = [k for k, _ in pairs]
    if len(set(keys)) != len(keys):
        raise ConfigError(f"duplicate keys in {keys}")
    if query not in keys:
        raise ConfigError(f"query {query!r} not among keys {keys}")
    tokens = "".join(k + v for k, v in pairs) + "??" + query
    target = dict(pairs)[query]
    return RecallExample(tokens=tokens, target=target)


def answer_of(tokens: str) -> str:
    """Recover the answer by scanning the pair region for the query key."""
    sep = tokens.index("??")
    query = tokens[sep + 2:]
    if len(query) != 1:
        raise ContractError(f"malformed example {tokens!r}")
    matches = [tokens[i + 1] for i in range(0, sep, 2) if tokens[i] == query]
    if len(matches) != 1:
        raise ContractError(f"query {query!r} matches {len(matches)} keys in {tokens!r}")
    return matches[0]


def _draw_batch(n: int, r: int, rng: np.random.Generator):
    """Vectorized draws: distinct keys per row, i.i.d. digit values,
    uniform query position."""
    keys = np.argsort(rng.random((n, 26)), axis=1)[:, :r]
    values = rng.integers(0, 10, size=(n, r))
    query_pos = rng.integers(0, r, size=n)
    return keys, values, query_pos


def _rows_to_examples(keys, values, query_pos) -> list[RecallExample]:
    out = []
    for ks, vs, q in zip(keys, values, query_pos):
        body = "".join(LETTERS[k] + DIGITS[v] for k, v in zip(ks, vs))
        out.append(RecallExample(tokens=body + "??" + LETTERS[ks[q]],
                                 target=DIGITS[vs[q]]))
    return out


def generate_recall_example(r: int, rng: np.random.Generator) -> RecallExample:
    if not 1 <= r <= 26:
        raise ConfigError(f"pair count must be in [1, 26], got {r}")
    keys, values, query_pos = _draw_batch(1, r, rng)
    return _rows_to_examples(keys, values, query_pos)[0]


@dataclass
class DatasetSplit:
    examples: list[RecallExample]
    role: str
    length: int  # encoded step count (nominal length)
    pair_count: int
    seed: int
    _indices: np.ndarray | None = field(default=None, repr=False)
    _targets: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.examples)

    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Token index matrix [N, length] (uint8, '?'-padded on the left)
        and target index vector [N]."""
        if self._indices is None:
            core = 2 * self.pair_count + 3
            pad = self.length - core
            if pad < 0:
                raise ContractError(
                    f"core sequence ({core}) longer than nominal length {self.length}"
                )
            n = len(self.examples)
            mat = np.full((n, self.length), _INDEX[PAD], dtype=np.uint8)
            tgt = np.empty(n, dtype=np.int64)
            for i, ex in enumerate(self.examples):
                if len(ex.tokens) != core:
                    raise ContractError(
                        f"example {i} has {len(ex.tokens)} tokens, split expects {core}"
                    )
                mat[i, pad:] = [symbol_index(c) for c in ex.tokens]
                tgt[i] = symbol_index(ex.target)
            self._indices = mat
            self._targets = tgt
        return self._indices, self._targets


def generate_splits(length: int, sizes: tuple[int, int, int], master_seed: int,
                    pair_count: int | None = None
                    ) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Three deterministic splits from disjoint substreams of the seed."""
    if pair_count is None:
        r = pair_count_for_length(length)
    else:
        r = int(pair_count)
        if not 1 <= r <= 26:
            raise ConfigError(f"pair count must be in [1, 26], got {r}")
        if 2 * r + 3 > length:
            raise ConfigError(f"pair count {r} does not fit in length {length}")
    splits = []
    for role, size in zip(("train", "val", "test"), sizes):
        size = int(size)
        if size <= 0:
            raise ConfigError(f"{role} size must be positive, got {size}")
        rng = stream(master_seed, "recall", length, role)
        examples = _rows_to_examples(*_draw_batch(size, r, rng))
        splits.append(DatasetSplit(examples=examples, role=role, length=length,
                                   pair_count=r, seed=master_seed))
    return tuple(splits)


@dataclass(frozen=True)
class OneHotSequence:
    onehot: np.ndarray  # [T, 37], each row sums to exactly 1
    target_index: int


def encode_one_hot(example: RecallExample, total_len: int | None = None) -> OneHotSequence:
    """One-hot encode, left-padding with '?' up to `total_len` if given."""
    idx = [symbol_index(c) for c in example.tokens]
    if total_len is not None:
        pad = total_len - len(idx)
        if pad < 0:
            raise ConfigError(f"example longer ({len(idx)}) than total_len {total_len}")
        idx = [_INDEX[PAD]] * pad + idx
    mat = np.zeros((len(idx), VOCAB_SIZE), dtype=default_dtype())
    mat[np.arange(len(idx)), idx] = 1.0
    return OneHotSequence(onehot=mat, target_index=symbol_index(example.target))


def decode_one_hot(seq: OneHotSequence) -> str:
    if seq.onehot.ndim != 2 or seq.onehot.shape[1] != VOCAB_SIZE:
        raise ContractError(f"bad one-hot shape {seq.onehot.shape}")
    sums = seq.onehot.sum(axis=1)
    if not np.all(sums == 1.0):
        raise ContractError("rows of a one-hot sequence must sum to exactly 1")
    return "".join(ALPHABET[j] for j in seq.onehot.argmax(axis=1))


def batch_iter(split: DatasetSplit, batch_size: int, shuffle_seed: int,
               epoch: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ([B, T, 37] one-hot inputs, [B] target indices) batches.

    The shuffle order is a pure function of (shuffle_seed, epoch); the
    final short batch is emitted as-is.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    indices, targets = split.index_arrays()
    n = len(split)
    order = stream(shuffle_seed, "shuffle", split.role, epoch).permutation(n)
    eye = np.eye(VOCAB_SIZE, dtype=default_dtype())
    for start in range(0, n, batch_size):
        pick = order[start:start + batch_size]
        yield eye[indices[pick]], targets[pick]


CACHE_MAGIC = "#recall v1"


def write_cache(split: DatasetSplit, path) -> None:
    """Text cache: header, then one `tokens<TAB>target` line per example."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{CACHE_MAGIC} L={split.length} R={split.pair_count} seed={split.seed}\n")
        for ex in split.examples:
            fh.write(f"{ex.tokens}\t{ex.target}\n")


def read_cache(path, role: str = "train") -> DatasetSplit:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(CACHE_MAGIC):
            raise ConfigError(f"{path}: not a recall cache file (bad header {header!r})")
        fields = dict(part.split("=", 1) for part in header[len(CACHE_MAGIC):].split())
        try:
            length, r, seed = int(fields["L"]), int(fields["R"]), int(fields["seed"])
        except (KeyError, ValueError):
            raise ConfigError(f"{path}: malformed cache header {header!r}") from None
        examples = []
        for ln, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                tokens, target = line.split("\t")
            except ValueError:
                raise ConfigError(f"{path}:{ln}: expected 'tokens<TAB>target'") from None
            examples.append(RecallExample(tokens=tokens, target=target))
    return DatasetSplit(examples=examples, role=role, length=length,
                        pair_count=r, seed=seed)
