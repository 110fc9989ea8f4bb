"""BiLSTM + max-pooling text encoder.

Gate blocks in the fused weight matrices are ordered (input, forget, output,
candidate); ``W[:, k*H:(k+1)*H]`` is the input weight of gate ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .embeddings import PAD, EmbeddingTable, lookup_batch
from .errors import DimensionError, EmptySequenceError
from .tensor import Tensor

GATES = ("i", "f", "o", "g")
INIT_SCALE = 0.08
FORGET_BIAS = 1.0


@dataclass
class LstmParams:
    W: Tensor  # (e, 4H)
    U: Tensor  # (H, 4H)
    b: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W_k, U_k, b_k) views for one gate."""
        k, H = GATES.index(name), self.hidden
        cols = slice(k * H, (k + 1) * H)
        return self.W.data[:, cols], self.U.data[:, cols], self.b.data[cols]

    def tensors(self) -> dict[str, Tensor]:
        return {"W": self.W, "U": self.U, "b": self.b}

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "") -> "LstmParams":
        W = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(input_dim, 4 * hidden))
        U = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = FORGET_BIAS
        return cls(T.parameter(W, prefix + "W"), T.parameter(U, prefix + "U"), T.parameter(b, prefix + "b"))


@dataclass
class EncoderParams:
    forward: LstmParams
    backward: LstmParams

    @property
    def output_dim(self) -> int:
        return 2 * self.forward.hidden

    def tensors(self) -> dict[str, Tensor]:
        out = {}
        for side, p in (("fwd", self.forward), ("bwd", self.backward)):
            for k, t in p.tensors().items():
                out[f"{side}.{k}"] = t
        return out

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "") -> "EncoderParams":
        return cls(
            LstmParams.init(input_dim, hidden, rng, prefix + "fwd."),
            LstmParams.init(input_dim, hidden, rng, prefix + "bwd."),
        )


def _cell(p: LstmParams, xw: Tensor, h_prev: Tensor | None, c_prev: Tensor | None) -> tuple[Tensor, Tensor]:
    # xw already holds x W + b; a None state means the zero initial state
    z = xw if h_prev is None else T.add(xw, T.matmul(h_prev, p.U))
    zi, zf, zo, zg = T.split(z, 4, axis=-1)
    i, o, g = T.sigmoid(zi), T.sigmoid(zo), T.tanh(zg)
    c = T.mul(i, g)
    if c_prev is not None:
        c = T.add(T.mul(T.sigmoid(zf), c_prev), c)
    h = T.mul(o, T.tanh(c))
    return h, c


def lstm_step(p: LstmParams, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM update; inputs may carry a leading batch axis."""
    H = p.hidden
    if x_t.shape[-1] != p.input_dim or h_prev.shape[-1] != H or c_prev.shape[-1] != H:
        raise DimensionError(
            f"lstm_step: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} vs params (e={p.input_dim}, H={H})"
        )
    xw = T.add(T.matmul(x_t, p.W), p.b)
    return _cell(p, xw, h_prev, c_prev)


def _scan(p: LstmParams, X: Tensor) -> Tensor:
    """Left-to-right LSTM over (N, T, e) from a zero state; returns (N, T, H)."""
    XW = T.add(T.matmul(X, p.W), p.b)
    h = c = None
    hs = []
    for xw in T.unstack(XW, axis=1):
        h, c = _cell(p, xw, h, c)
        hs.append(h)
    return T.stack(hs, axis=1)


def reverse_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Per-row permutation that reverses the valid prefix and leaves padding in place."""
    t = np.arange(steps)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


def _check_lengths(lengths: np.ndarray, steps: int) -> None:
    if np.any(lengths < 1):
        raise EmptySequenceError("cannot encode an empty sequence (valid_len = 0)")
    if np.any(lengths > steps):
        raise DimensionError(f"valid_len {lengths.max()} exceeds sequence length {steps}")


def bilstm(p: EncoderParams, X: Tensor, valid_len) -> Tensor:
    """Row t is [h_t forward ; h_t backward]; rows at t >= valid_len are zero.

    ``X`` is (T, e) with an int ``valid_len`` or (N, T, e) with a length array.
    The backward LSTM starts at the last valid token, so padding never feeds it.
    """
    single = X.ndim == 2
    if single:
        X = T.reshape(X, (1,) + X.shape)
    lengths = np.atleast_1d(np.asarray(valid_len, dtype=np.int64))
    N, steps, _ = X.shape
    if lengths.shape != (N,):
        raise DimensionError(f"valid_len shape {lengths.shape} does not match batch of {N}")
    _check_lengths(lengths, steps)
    rev = reverse_index(lengths, steps)
    Hf = _scan(p.forward, X)
    Hb = T.take_along_time(_scan(p.backward, T.take_along_time(X, rev)), rev)
    mask = (np.arange(steps)[None, :] < lengths[:, None]).astype(np.float64)[..., None]
    out = T.mul(T.concat([Hf, Hb], axis=-1), mask)
    if single:
        out = T.reshape(out, out.shape[1:])
    return out


def encode_ids(p: EncoderParams, table: EmbeddingTable, ids: np.ndarray, lengths: np.ndarray) -> Tensor:
    """Encode a padded (N, L) id matrix to (N, 2H).

    Columns past the longest valid length are dropped first; they are padding
    for every row and cannot change the result.
    """
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    _check_lengths(lengths, ids.shape[1])
    ids = ids[:, : int(lengths.max())]
    X = lookup_batch(table, ids)
    return T.max_over_time(bilstm(p, X, lengths), lengths)


def encode(p: EncoderParams, table: EmbeddingTable, ids, max_len: int = 50) -> Tensor:
    """Encode one token-id sequence to a 2H vector; trailing padding ids are ignored."""
    ids = list(ids)[:max_len]
    while ids and ids[-1] == PAD:
        ids.pop()
    if not ids:
        raise EmptySequenceError("cannot encode an empty sequence")
    out = encode_ids(p, table, np.array([ids]), np.array([len(ids)]))
    return T.reshape(out, (p.output_dim,))
