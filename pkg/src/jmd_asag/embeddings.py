"""Vocabulary, pretrained vector loading and the trainable lookup table."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Sample, tokenize
from .errors import ConfigError, ContractError, ParseError
from .tensor import Tensor, parameter, take

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
OOV_SCALE = 0.05


class Vocab:
    """Token/id bijection with reserved ids 0 (padding) and 1 (unknown)."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            if tok in self.stoi:
                raise ContractError(f"duplicate or reserved token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi and self.stoi[token] > UNK

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    @property
    def corpus_tokens(self) -> list[str]:
        return self.itos[2:]


def build_vocab(corpus: Iterable[Sample], min_count: int = 1) -> Vocab:
    """Collect tokens from reference, student and question text across all domains.

    Ids are assigned by descending frequency, ties broken lexicographically.
    """
    counts: Counter[str] = Counter()
    n = 0
    for s in corpus:
        n += 1
        for text in (s.question, s.reference, s.student):
            counts.update(tokenize(text))
    if n == 0:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    for reserved in (PAD_TOKEN, UNK_TOKEN):
        counts.pop(reserved, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab(kept)


@dataclass
class EmbeddingTable:
    matrix: Tensor  # (V, e), trainable
    pretrained: np.ndarray  # (V,) bool provenance flag per row

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def coverage(self) -> tuple[int, int]:
        """(rows found in the pretrained file, corpus tokens)."""
        return int(self.pretrained[2:].sum()), len(self.pretrained) - 2


def random_table(vocab: Vocab, dim: int, seed: int) -> EmbeddingTable:
    """Every row i.i.d. uniform(-0.05, 0.05) except the zero padding row."""
    if dim < 1:
        raise ConfigError(f"embedding dim must be >= 1, got {dim}")
    rng = np.random.default_rng([seed, 0xE3B])
    mat = rng.uniform(-OOV_SCALE, OOV_SCALE, size=(len(vocab), dim))
    mat[PAD] = 0.0
    return EmbeddingTable(parameter(mat, name="embedding"), np.zeros(len(vocab), dtype=bool))


def load_pretrained(path: str | Path | None, vocab: Vocab, dim: int, seed: int) -> EmbeddingTable:
    """Initialise from a ``token v1 ... v_dim`` text file; unmatched rows stay random.

    The random draw happens for the full table before the file is read, so an
    OOV row depends only on (seed, vocab size, dim).
    """
    table = random_table(vocab, dim, seed)
    if path is None:
        return table
    mat = table.matrix.data
    path = Path(path)
    try:
        handle = path.open(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"embedding file not found: {path}") from None
    with handle:
        for lineno, line in enumerate(handle, start=1):
            parts = line.rstrip("\n").split(" ")
            if parts == [""]:
                continue
            if lineno == 1 and len(parts) - 1 != dim:
                raise ConfigError(f"{path} holds {len(parts) - 1}-d vectors but embedding dim is {dim}")
            if len(parts) != dim + 1:
                raise ParseError(f"expected token + {dim} values, found {len(parts)} fields", lineno, str(path))
            idx = vocab.stoi.get(parts[0])
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise ParseError("unparsable float", lineno, str(path)) from None
            if idx is None or idx <= UNK:
                continue
            mat[idx] = vec
            table.pretrained[idx] = True
    return table


def lookup(table: EmbeddingTable, ids: Sequence[int], max_len: int) -> tuple[Tensor, int]:
    """Embed one id sequence, truncated or zero-padded to ``max_len`` rows."""
    ids = list(ids)
    if not ids:
        raise ContractError("lookup needs at least one token id")
    seq = ids[:max_len]
    padded = np.zeros(max_len, dtype=np.int64)
    padded[: len(seq)] = seq
    return take(table.matrix, padded, frozen_rows=(PAD,)), len(seq)


def lookup_batch(table: EmbeddingTable, ids: np.ndarray) -> Tensor:
    """Embed an already padded (N, T) id matrix."""
    return take(table.matrix, ids, frozen_rows=(PAD,))
