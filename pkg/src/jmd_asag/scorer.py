"""Pairwise similarity scorer: (reference, student) -> class-wise scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .embeddings import EmbeddingTable
from .encoder import EncoderParams, encode_ids
from .errors import DimensionError
from .tensor import Tensor


@dataclass
class ScorerParams:
    encoder: EncoderParams
    W: Tensor  # (4d, c), no bias

    @property
    def n_classes(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> dict[str, Tensor]:
        out = {f"enc.{k}": t for k, t in self.encoder.tensors().items()}
        out["W"] = self.W
        return out

    @classmethod
    def init(cls, input_dim: int, hidden: int, n_classes: int, rng: np.random.Generator, prefix: str = "") -> "ScorerParams":
        enc = EncoderParams.init(input_dim, hidden, rng, prefix + "enc.")
        fan_in = 8 * hidden
        limit = np.sqrt(6.0 / (fan_in + n_classes))
        W = rng.uniform(-limit, limit, size=(fan_in, n_classes))
        return cls(enc, T.parameter(W, prefix + "W"))


def build_feature(eR: Tensor, eS: Tensor) -> Tensor:
    """[eR, eS, eR * eS, |eR - eS|] along the last axis."""
    if eR.shape != eS.shape:
        raise DimensionError(f"build_feature: encodings differ in shape {eR.shape} vs {eS.shape}")
    return T.concat([eR, eS, T.mul(eR, eS), T.abs_diff(eR, eS)], axis=-1)


def score_batch(
    p: ScorerParams,
    table: EmbeddingTable,
    ref_ids: np.ndarray,
    ref_len: np.ndarray,
    stu_ids: np.ndarray,
    stu_len: np.ndarray,
) -> Tensor:
    """Raw scores (N, c). Both sides go through this scorer's single encoder in one pass."""
    n = len(ref_len)
    width = max(ref_ids.shape[1], stu_ids.shape[1])
    ids = np.zeros((2 * n, width), dtype=np.int64)
    ids[:n, : ref_ids.shape[1]] = ref_ids
    ids[n:, : stu_ids.shape[1]] = stu_ids
    enc = encode_ids(p.encoder, table, ids, np.concatenate([ref_len, stu_len]))
    eR, eS = enc[:n], enc[n:]
    return T.matmul(build_feature(eR, eS), p.W)


def score(p: ScorerParams, table: EmbeddingTable, ref_ids, stu_ids, max_len: int = 50) -> Tensor:
    """Raw scores (c,) for a single pair of id sequences."""
    ref = list(ref_ids)[:max_len]
    stu = list(stu_ids)[:max_len]
    out = score_batch(p, table, np.array([ref]), np.array([len(ref)]), np.array([stu]), np.array([len(stu)]))
    return T.reshape(out, (p.n_classes,))
