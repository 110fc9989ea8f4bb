"""Dense float64 arrays with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient. Outside any tape every op is a plain
numpy computation, which is how evaluation runs::

    tape = Tape()
    with tape:
        loss = mean(mul(w, x))
    backward(loss, tape)
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, EmptySequenceError

DTYPE = np.float64

_TAPES: list["Tape"] = []


class Tensor:
    """A float64 array that may take part in gradient computation."""

    __slots__ = ("data", "requires_grad", "_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._grad = np.zeros_like(self.data) if self.requires_grad else None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data if data.dtype == DTYPE else data.astype(DTYPE)
        out.requires_grad = requires_grad
        out.name = None
        out._grad = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    @property
    def grad(self) -> np.ndarray | None:
        if not self.requires_grad:
            return None
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = None if value is None else np.array(value, dtype=DTYPE)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self._grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        # never in place: backward rules may hand the same array to several inputs
        if self._grad is None:
            self._grad = np.asarray(g, dtype=DTYPE).reshape(self.data.shape)
        else:
            self._grad = self._grad + g

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # operator sugar; constants on either side are wrapped without grad
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


class _Record:
    __slots__ = ("outputs", "inputs", "backward")

    def __init__(self, outputs, inputs, backward):
        self.outputs = outputs
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of differentiable operations.

    Use as a context manager to make it the active tape. Tapes nest; ops
    record on the innermost one.
    """

    def __init__(self) -> None:
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self.records)

    def record(self, outputs: tuple[Tensor, ...], inputs: tuple[Tensor, ...], fn) -> None:
        self.records.append(_Record(outputs, inputs, fn))

    def clear(self) -> None:
        self.records.clear()


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data: np.ndarray, inputs: tuple[Tensor, ...], fn: Callable) -> Tensor:
    """Wrap a single-output result and record it if needed.

    ``fn(g)`` returns one gradient (or None) per input.
    """
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, track)
    if track:
        tape.record((out,), inputs, lambda gs: fn(gs[0]))
    return out


def _emit_many(datas: Sequence[np.ndarray], inputs: tuple[Tensor, ...], fn: Callable) -> list[Tensor]:
    """Multi-output variant; ``fn`` receives a list of output grads, None where unused."""
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    outs = [Tensor._wrap(d, track) for d in datas]
    if track:
        tape.record(tuple(outs), inputs, fn)
    return outs


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tracked tensor.

    The tape is consumed: records are cleared afterwards.
    """
    if tape is None:
        tape = active_tape()
    if tape is None or not tape.records:
        return
    if loss.data.size != 1 or loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not on the tape")
    loss._accumulate(np.ones_like(loss.data))
    for rec in reversed(tape.records):
        gs = [o._grad for o in rec.outputs]
        if all(g is None for g in gs):
            continue
        grads = rec.backward(gs)
        for inp, g in zip(rec.inputs, grads):
            if g is not None and inp.requires_grad:
                inp._accumulate(g)
    tape.clear()


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{opname}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product ``a @ b``; ``a`` may carry leading batch axes, ``b`` is 1-D or 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or b.ndim > 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    out = ad @ bd

    def fn(g):
        if bd.ndim == 1:
            ga = g[..., None] * bd
            gb = (ad.reshape(-1, bd.shape[0]) * g.reshape(-1, 1)).sum(axis=0)
        elif ad.ndim == 1:
            ga = bd @ g
            gb = np.outer(ad, g)
        else:
            ga = g @ bd.T
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, bd.shape[1])
        return ga, gb

    return _emit(out, (a, b), fn)


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def fn(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _emit(ad * bd, (a, b), fn)


def abs_diff(a, b) -> Tensor:
    """``|a - b|``; the subgradient at zero is 0."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "abs_diff")
    d = a.data - b.data
    sign = np.sign(d)
    sa, sb = a.shape, b.shape

    def fn(g):
        gs = g * sign
        return _unbroadcast(gs, sa), _unbroadcast(-gs, sb)

    return _emit(np.abs(d), (a, b), fn)


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "abs_diff": abs_diff}


def elementwise(op: str, a, b) -> Tensor:
    try:
        return _ELEMENTWISE[op](a, b)
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None


# ---------------------------------------------------------------------------
# unary ops


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # identity sigma(x) = (1 + tanh(x / 2)) / 2; no overflow for any finite x
    return 0.5 * np.tanh(0.5 * x) + 0.5


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _stable_sigmoid(x.data)
    return _emit(y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _emit(y, (x,), lambda g: (g * (1.0 - y * y),))


def activation(kind: str, x) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ContractError(f"unknown activation {kind!r}")


def log(x, floor: float = 1e-12) -> Tensor:
    """Natural log of ``max(x, floor)``; no gradient flows where the floor is active."""
    x = as_tensor(x)
    clamped = np.maximum(x.data, floor)
    live = x.data > floor
    return _emit(np.log(clamped), (x,), lambda g: (np.where(live, g / clamped, 0.0),))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] < 2:
        raise DimensionError(f"softmax needs at least 2 entries along axis {axis}, got {x.shape}")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit(y, (x,), fn)


# ---------------------------------------------------------------------------
# reductions


def sum(x, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape

    def fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(np.asarray(x.data.sum(axis=axis)), (x,), fn)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def max_over_time(h, valid_len) -> Tensor:
    """Per-dimension max over the time axis (second to last), ignoring padding.

    ``h`` has shape ``(..., T, d)``; ``valid_len`` is an int or an integer
    array with shape ``h.shape[:-2]``. Rows at ``t >= valid_len`` never win.
    Gradient goes to the first arg-max position only.
    """
    h = as_tensor(h)
    if h.ndim < 2:
        raise DimensionError(f"max_over_time needs (..., T, d), got {h.shape}")
    T = h.shape[-2]
    lengths = np.asarray(valid_len)
    if lengths.shape not in ((), h.shape[:-2]):
        raise DimensionError(f"valid_len shape {lengths.shape} does not match batch shape {h.shape[:-2]}")
    if np.any(lengths < 1):
        raise EmptySequenceError("max_over_time over an empty sequence (valid_len = 0)")
    if np.any(lengths > T):
        raise DimensionError(f"valid_len {lengths.max()} exceeds sequence length {T}")
    t_idx = np.arange(T).reshape((1,) * (h.ndim - 2) + (T, 1))
    masked = np.where(t_idx < lengths[..., None, None], h.data, -np.inf)
    arg = np.argmax(masked, axis=-2)
    out = np.take_along_axis(h.data, arg[..., None, :], axis=-2)[..., 0, :]

    def fn(g):
        gh = np.zeros(h.shape)
        np.put_along_axis(gh, arg[..., None, :], g[..., None, :], axis=-2)
        return (gh,)

    return _emit(out, (h,), fn)


# ---------------------------------------------------------------------------
# shape manipulation


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat of zero tensors")
    if len(parts) == 1:
        return parts[0]
    nd = parts[0].ndim
    ax = axis % nd if nd else 0
    for p in parts:
        if p.ndim != nd or any(
            p.shape[i] != parts[0].shape[i] for i in range(nd) if i != ax
        ):
            raise DimensionError(f"concat: incompatible shapes {[q.shape for q in parts]} on axis {axis}")
    sizes = [p.shape[ax] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _emit(np.concatenate([p.data for p in parts], axis=ax), tuple(parts), fn)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    shapes = {p.shape for p in parts}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes differ {sorted(shapes)}")
    out = np.stack([p.data for p in parts], axis=axis)
    ax = axis % out.ndim

    def fn(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(parts)))

    return _emit(out, tuple(parts), fn)


def unstack(x: Tensor, axis: int = 0) -> list[Tensor]:
    """Inverse of :func:`stack`: one output per index along ``axis``."""
    x = as_tensor(x)
    ax = axis % x.ndim
    n = x.shape[ax]
    datas = [np.take(x.data, i, axis=ax) for i in range(n)]

    def fn(gs):
        gx = np.zeros(x.shape)
        for i, g in enumerate(gs):
            if g is not None:
                idx = [slice(None)] * x.ndim
                idx[ax] = i
                gx[tuple(idx)] = g
        return (gx,)

    return _emit_many(datas, (x,), fn)


def split(x: Tensor, sections: int, axis: int = -1) -> list[Tensor]:
    """Split into ``sections`` equal chunks along ``axis``."""
    x = as_tensor(x)
    ax = axis % x.ndim
    if x.shape[ax] % sections:
        raise DimensionError(f"split: axis of size {x.shape[ax]} not divisible by {sections}")
    datas = np.split(x.data, sections, axis=ax)

    def fn(gs):
        return (np.concatenate([np.zeros(d.shape) if g is None else g for g, d in zip(gs, datas)], axis=ax),)

    return _emit_many(datas, (x,), fn)


def reshape(x, shape: Iterable[int]) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return _emit(x.data.reshape(tuple(shape)), (x,), lambda g: (g.reshape(src),))


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x, idx) -> Tensor:
    x = as_tensor(x)
    out = x.data[idx]
    basic = _is_basic_index(idx)

    def fn(g):
        gx = np.zeros(x.shape)
        if basic:
            gx[idx] = g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _emit(np.asarray(out, dtype=DTYPE), (x,), fn)


def take(table, ids, frozen_rows: Sequence[int] = ()) -> Tensor:
    """Gather rows of a 2-D ``table``; output shape is ``ids.shape + (e,)``.

    Rows listed in ``frozen_rows`` receive no gradient.
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"take needs a 2-D table, got {table.shape}")
    V, e = table.shape
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        bad = ids[(ids < 0) | (ids >= V)][0]
        raise IndexError(f"token id {int(bad)} out of range for table with {V} rows")
    frozen = list(frozen_rows)

    def fn(g):
        gt = np.zeros((V, e))
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, e))
        if frozen:
            gt[frozen] = 0.0
        return (gt,)

    return _emit(table.data[ids], (table,), fn)


def take_along_time(x, index: np.ndarray) -> Tensor:
    """Reorder the time axis per sequence: ``out[n, t] = x[n, index[n, t]]``.

    ``x`` has shape ``(N, T, d)`` and ``index`` shape ``(N, T)``; every row of
    ``index`` must be a permutation of ``range(T)``.
    """
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if x.ndim != 3 or index.shape != x.shape[:2]:
        raise DimensionError(f"take_along_time: x {x.shape} vs index {index.shape}")
    gather = index[..., None]
    out = np.take_along_axis(x.data, gather, axis=1)

    def fn(g):
        gx = np.zeros(x.shape)
        np.put_along_axis(gx, gather, g, axis=1)
        return (gx,)

    return _emit(out, (x,), fn)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)
