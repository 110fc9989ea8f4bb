"""Finite-difference checks for every differentiable op and the full scorer path.

Each case builds a few random inputs and a closure returning a scalar. The
analytic gradient from the tape is compared with central differences using

    rel = ||g_analytic - g_numeric|| / max(||g_analytic|| + ||g_numeric||, 1e-12)

per input tensor; a case reports the worst of its inputs. Ops are looked up on
the ``tensor`` module at call time, so a test can patch one and watch it fail.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .embeddings import EmbeddingTable, Vocab
from .encoder import EncoderParams, bilstm, lstm_step
from .scorer import ScorerParams, score_batch
from .tensor import Tape, Tensor
from .trainer import cross_entropy

THRESHOLD = 1e-4
STEP = 1e-6

# tiny shapes used throughout
E, H, STEPS, C = 3, 4, 5, 3

Case = Callable[[np.random.Generator], tuple[dict[str, Tensor], Callable[[], Tensor]]]


def _p(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return T.parameter(rng.normal(scale=scale, size=shape))


def _project(rng: np.random.Generator, out: Callable[[], Tensor], shape: tuple[int, ...]):
    """Reduce a tensor-valued op to a scalar with fixed random weights."""
    w = rng.normal(size=shape)
    return lambda: T.sum(T.mul(out(), w))


def _away_from_zero(rng, shape, margin=0.2):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-9) * margin, x)


# ---------------------------------------------------------------------------
# cases


def _case_matmul(rng):
    a, b = _p(rng, 2, 3, E), _p(rng, E, H)
    return {"a": a, "b": b}, _project(rng, lambda: T.matmul(a, b), (2, 3, H))


def _case_matvec(rng):
    a, b = _p(rng, 3, E), _p(rng, E)
    return {"a": a, "b": b}, _project(rng, lambda: T.matmul(a, b), (3,))


def _case_add(rng):
    a, b = _p(rng, 3, H), _p(rng, H)  # broadcast
    return {"a": a, "b": b}, _project(rng, lambda: T.add(a, b), (3, H))


def _case_sub(rng):
    a, b = _p(rng, 3, H), _p(rng, 1, H)
    return {"a": a, "b": b}, _project(rng, lambda: T.sub(a, b), (3, H))


def _case_mul(rng):
    a, b = _p(rng, 3, H), _p(rng, 3, 1)
    return {"a": a, "b": b}, _project(rng, lambda: T.mul(a, b), (3, H))


def _case_abs_diff(rng):
    a = _p(rng, 3, H)
    b = T.parameter(a.data - _away_from_zero(rng, (3, H)))
    return {"a": a, "b": b}, _project(rng, lambda: T.abs_diff(a, b), (3, H))


def _case_sigmoid(rng):
    x = _p(rng, 3, H, scale=2.0)
    return {"x": x}, _project(rng, lambda: T.sigmoid(x), (3, H))


def _case_tanh(rng):
    x = _p(rng, 3, H, scale=2.0)
    return {"x": x}, _project(rng, lambda: T.tanh(x), (3, H))


def _case_log(rng):
    x = T.parameter(rng.uniform(0.5, 2.0, size=(3, H)))
    return {"x": x}, _project(rng, lambda: T.log(x), (3, H))


def _case_softmax(rng):
    x = _p(rng, 2, C)
    return {"x": x}, _project(rng, lambda: T.softmax(x, axis=-1), (2, C))


def _case_sum(rng):
    x = _p(rng, 2, 3, H)
    return {"x": x}, _project(rng, lambda: T.sum(x, axis=1), (2, H))


def _case_mean(rng):
    x = _p(rng, 2, 3, H)
    return {"x": x}, _project(rng, lambda: T.mean(x, axis=0), (3, H))


def _case_max_over_time(rng):
    # distinct values per column keep the arg-max away from ties
    data = np.stack([rng.permutation(STEPS) + 0.1 * rng.normal(size=STEPS) for _ in range(2 * H)], axis=-1)
    x = T.parameter(data.reshape(STEPS, 2, H).transpose(1, 0, 2))
    lengths = np.array([STEPS, 3])
    return {"h": x}, _project(rng, lambda: T.max_over_time(x, lengths), (2, H))


def _case_concat(rng):
    a, b = _p(rng, 2, H), _p(rng, 2, 2)
    return {"a": a, "b": b}, _project(rng, lambda: T.concat([a, b], axis=-1), (2, H + 2))


def _case_stack(rng):
    a, b = _p(rng, 2, H), _p(rng, 2, H)
    return {"a": a, "b": b}, _project(rng, lambda: T.stack([a, b], axis=1), (2, 2, H))


def _case_unstack(rng):
    x = _p(rng, 2, 3, H)
    w = [rng.normal(size=(2, H)) for _ in range(3)]

    def f():
        parts = T.unstack(x, axis=1)
        # leave one output unused to exercise the missing-gradient branch
        return T.add(T.sum(T.mul(parts[0], w[0])), T.sum(T.mul(parts[2], w[2])))

    return {"x": x}, f


def _case_split(rng):
    x = _p(rng, 2, 4 * H)
    w = rng.normal(size=(2, H))
    return {"x": x}, lambda: T.sum(T.mul(T.split(x, 4, axis=-1)[1], w))


def _case_reshape(rng):
    x = _p(rng, 2, 3, H)
    return {"x": x}, _project(rng, lambda: T.reshape(x, (6, H)), (6, H))


def _case_getitem(rng):
    x = _p(rng, 4, H)
    rows = np.array([0, 2, 2])  # repeated index accumulates
    w = rng.normal(size=(3, H))
    v = rng.normal(size=(H,))
    return {"x": x}, lambda: T.add(T.sum(T.mul(T.getitem(x, rows), w)), T.sum(T.mul(T.getitem(x, 1), v)))


def _case_take(rng):
    table = _p(rng, 6, E)
    ids = np.array([[1, 3, 3], [5, 0, 2]])
    return {"table": table}, _project(rng, lambda: T.take(table, ids), (2, 3, E))


def _case_take_along_time(rng):
    x = _p(rng, 2, STEPS, H)
    index = np.stack([rng.permutation(STEPS) for _ in range(2)])
    return {"x": x}, _project(rng, lambda: T.take_along_time(x, index), (2, STEPS, H))


def _case_lstm_step(rng):
    enc = EncoderParams.init(E, H, rng)
    p = enc.forward
    for t in (p.W, p.U, p.b):
        t.data[...] = rng.normal(scale=0.5, size=t.shape)
    x, h, c = _p(rng, 2, E), _p(rng, 2, H), _p(rng, 2, H)
    wh, wc = rng.normal(size=(2, H)), rng.normal(size=(2, H))

    def f():
        h1, c1 = lstm_step(p, x, h, c)
        return T.add(T.sum(T.mul(h1, wh)), T.sum(T.mul(c1, wc)))

    return {"W": p.W, "U": p.U, "b": p.b, "x": x, "h": h, "c": c}, f


def _case_bilstm(rng):
    enc = EncoderParams.init(E, H, rng)
    params = enc.tensors()
    for t in params.values():
        t.data[...] = rng.normal(scale=0.5, size=t.shape)
    X = _p(rng, 2, STEPS, E)
    lengths = np.array([STEPS, 3])
    return {**params, "X": X}, _project(rng, lambda: bilstm(enc, X, lengths), (2, STEPS, 2 * H))


def _tiny_scorer(rng, vocab_size=10) -> tuple[EmbeddingTable, ScorerParams]:
    vocab = Vocab([f"w{i}" for i in range(vocab_size - 2)])
    matrix = rng.normal(size=(len(vocab), E))
    matrix[0] = 0.0
    table = EmbeddingTable(T.parameter(matrix, "embedding"), np.zeros(len(vocab), dtype=bool))
    scorer = ScorerParams.init(E, H, C, rng)
    for t in scorer.tensors().values():
        t.data[...] = rng.normal(scale=0.5, size=t.shape)
    return table, scorer


_REF = np.array([[2, 3, 4, 5, 6], [7, 8, 0, 0, 0]])
_REF_LEN = np.array([5, 2])
_STU = np.array([[3, 2, 9, 0, 0], [4, 5, 4, 6, 4]])
_STU_LEN = np.array([3, 5])
_LABELS = np.array([0, 2])


def _case_composed(rng):
    """embedding -> BiLSTM -> max-pool -> feature -> dense -> softmax -> cross-entropy."""
    table, scorer = _tiny_scorer(rng)
    params = {"embedding": table.matrix, **scorer.tensors()}

    def f():
        probs = T.softmax(score_batch(scorer, table, _REF, _REF_LEN, _STU, _STU_LEN), axis=-1)
        return cross_entropy(probs, _LABELS)

    return params, f


def _case_joint(rng):
    """Two scorers summed before the softmax, sharing one embedding table."""
    table, domain = _tiny_scorer(rng)
    generic = ScorerParams.init(E, H, C, rng)
    for t in generic.tensors().values():
        t.data[...] = rng.normal(scale=0.5, size=t.shape)
    params = {
        "embedding": table.matrix,
        **{f"domain.{k}": v for k, v in domain.tensors().items()},
        **{f"generic.{k}": v for k, v in generic.tensors().items()},
    }
    args = (table, _REF, _REF_LEN, _STU, _STU_LEN)

    def f():
        logits = T.add(score_batch(domain, *args), score_batch(generic, *args))
        return cross_entropy(T.softmax(logits, axis=-1), _LABELS)

    return params, f


CASES: dict[str, Case] = {
    "matmul": _case_matmul,
    "matvec": _case_matvec,
    "add": _case_add,
    "sub": _case_sub,
    "mul": _case_mul,
    "abs_diff": _case_abs_diff,
    "sigmoid": _case_sigmoid,
    "tanh": _case_tanh,
    "log": _case_log,
    "softmax": _case_softmax,
    "sum": _case_sum,
    "mean": _case_mean,
    "max_over_time": _case_max_over_time,
    "concat": _case_concat,
    "stack": _case_stack,
    "unstack": _case_unstack,
    "split": _case_split,
    "reshape": _case_reshape,
    "getitem": _case_getitem,
    "take": _case_take,
    "take_along_time": _case_take_along_time,
    "lstm_step": _case_lstm_step,
    "bilstm": _case_bilstm,
    "composed": _case_composed,
    "joint": _case_joint,
}


# ---------------------------------------------------------------------------
# runner


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(analytic - numeric)
    den = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    return float(num / den)


def numeric_gradient(f: Callable[[], Tensor], x: Tensor, step: float = STEP) -> np.ndarray:
    g = np.zeros_like(x.data)
    # index in place: reshape(-1) would copy a non-contiguous array
    for i in np.ndindex(x.shape):
        orig = x.data[i]
        x.data[i] = orig + step
        up = f().item()
        x.data[i] = orig - step
        down = f().item()
        x.data[i] = orig
        g[i] = (up - down) / (2 * step)
    return g


def analytic_gradients(f: Callable[[], Tensor], inputs: dict[str, Tensor]) -> dict[str, np.ndarray]:
    for t in inputs.values():
        t.zero_grad()
    tape = Tape()
    with tape:
        loss = f()
    T.backward(loss, tape)
    return {name: np.array(t.grad) for name, t in inputs.items()}


@dataclass
class CaseResult:
    name: str
    max_rel_error: float
    per_input: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error)) and self.max_rel_error < THRESHOLD


@dataclass
class GradcheckReport:
    results: list[CaseResult]
    seed: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def to_text(self) -> str:
        width = max(len(r.name) for r in self.results)
        lines = [f"{r.name:<{width}}  {r.max_rel_error:.3e}  {'ok' if r.passed else 'FAIL'}" for r in self.results]
        verdict = "PASS" if self.passed else "FAIL: " + ", ".join(self.failures)
        lines.append(f"gradcheck seed={self.seed} threshold={THRESHOLD:g} {verdict}")
        return "\n".join(lines) + "\n"


def check_case(name: str, case: Case, seed: int) -> CaseResult:
    rng = np.random.default_rng([seed, sum(name.encode())])
    inputs, f = case(rng)
    analytic = analytic_gradients(f, inputs)
    per_input = {k: relative_error(analytic[k], numeric_gradient(f, t)) for k, t in inputs.items()}
    return CaseResult(name, max(per_input.values()), per_input)


def run_suite(seed: int = 0, only: list[str] | None = None) -> GradcheckReport:
    names = list(CASES) if only is None else only
    unknown = [n for n in names if n not in CASES]
    if unknown:
        raise KeyError(f"unknown gradcheck cases {unknown}")
    return GradcheckReport([check_case(n, CASES[n], seed) for n in names], seed)
