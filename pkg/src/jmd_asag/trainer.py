"""Training loop: cross-entropy, Adam, and the three domain schedules.

``batch``  : for epoch, for batch index, for domain   (domain changes every batch)
``epoch``  : for epoch, for domain, for batch index   (domain changes every epoch)
``domain`` : for domain, for epoch, for batch index   (each domain trained to the end)

Every protocol draws from the same per-(domain, epoch) batch streams, so for
a single domain all three produce the same updates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .data import Batch, DomainCorpus, EncodedCorpus, batches_from_encoded, encode_corpus, get_scheme
from .errors import ConfigError, ContractError, LabelError, NumericError
from .metrics import report_from_predictions
from .model import JmdModel, forward_batch, predict_encoded
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean over the batch of ``-log p[label]`` with p clamped at 1e-12."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != len(labels):
        raise ContractError(f"cross_entropy: probs {probs.shape} vs {len(labels)} labels")
    c = probs.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels must lie in [0, {c}), got {labels.min()}..{labels.max()}")
    picked = probs[np.arange(len(labels)), labels]
    return T.mul(T.mean(T.log(picked, floor=PROB_FLOOR)), -1.0)


@dataclass
class AdamState:
    """Moments per parameter name. Each parameter keeps its own step count
    because a domain scorer is only stepped on its own domain's batches."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: dict[str, int] = field(default_factory=dict)
    steps: int = 0


def clip_by_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    norm = math.sqrt(float(np.sum([np.sum(p.grad**2) for p in params.values()])))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            p.grad = p.grad * scale
    return norm


def adam_step(state: AdamState, params: dict[str, Tensor], cfg: TrainConfig) -> None:
    b1, b2 = cfg.betas
    for name, p in params.items():
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient in parameter {name!r} at step {state.steps + 1}")
    state.steps += 1
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
            state.t[name] = 0
        t = state.t[name] = state.t[name] + 1
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def train_on_batch(model: JmdModel, batch: Batch, domain: int, state: AdamState, cfg: TrainConfig) -> float:
    """Forward, backward and one Adam step over the parameters this domain may touch."""
    if batch.domains is not None and np.any(batch.domains != domain):
        raise ContractError(f"batch mixes domains {sorted(set(batch.domains.tolist()))}; expected only {domain}")
    if batch.domain != domain:
        raise ContractError(f"batch belongs to domain {batch.domain}, asked to train domain {domain}")
    params = model.active_parameters(domain)
    for p in params.values():
        p.zero_grad()
    tape = Tape()
    with tape:
        loss = cross_entropy(forward_batch(model, batch, domain), batch.labels)
    T.backward(loss, tape)
    if cfg.clip_norm is not None:
        clip_by_global_norm(params, cfg.clip_norm)
    adam_step(state, params, cfg)
    return loss.item()


# ---------------------------------------------------------------------------
# schedules


def num_batches(sizes: Sequence[int], batch_size: int) -> int:
    """Batches per domain per epoch: enough to cover the largest domain once."""
    return math.ceil(max(sizes) / batch_size)


def domain_stream(enc: EncodedCorpus, batch_size: int, n: int, seed: int, epoch: int, domain: int) -> list[Batch]:
    """First ``n`` batches of a domain for one epoch; a short domain wraps
    around with a fresh shuffle on every pass."""
    out: list[Batch] = []
    wrap = 0
    while len(out) < n:
        out.extend(batches_from_encoded(enc, batch_size, seed, epoch, domain, wrap))
        wrap += 1
    return out[:n]


@dataclass
class Unit:
    """A block of steps that ends with one history record."""

    stage: str | None
    epoch: int
    steps: list[tuple[int, int, int]]  # (domain, epoch, batch index)


def schedule(protocol: str, k: int, epochs: int, n: int) -> Iterator[Unit]:
    if protocol == "batch":
        for e in range(epochs):
            yield Unit(None, e, [(d, e, b) for b in range(n) for d in range(k)])
    elif protocol == "epoch":
        for e in range(epochs):
            yield Unit(None, e, [(d, e, b) for d in range(k) for b in range(n)])
    elif protocol == "domain":
        for d in range(k):
            for e in range(epochs):
                yield Unit(str(d), e, [(d, e, b) for b in range(n)])
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")


def evaluate_encoded(model: JmdModel, encoded: dict[str, EncodedCorpus]):
    scheme = get_scheme(model.scheme)
    per_domain = {}
    for name, enc in encoded.items():
        per_domain[name] = (enc.labels, predict_encoded(model, enc, model.domain_index(name)))
    return report_from_predictions(per_domain, scheme)


def train(
    model: JmdModel,
    corpora: Sequence[DomainCorpus],
    cfg: TrainConfig,
    on_batch: Callable[[int, int, float], None] | None = None,
    on_record: Callable[[dict], None] | None = None,
) -> tuple[JmdModel, list[dict]]:
    """Train in place and return ``(model, history)``.

    ``corpora`` follow ``model.domain_names`` order. When a corpus has a dev
    split, every history record carries per-domain dev metrics.
    """
    cfg.validate()
    names = [c.name for c in corpora]
    if names != model.domain_names:
        raise ConfigError(f"corpora {names} do not match model domains {model.domain_names}")
    for c in corpora:
        if not c.train:
            raise ConfigError(f"domain {c.name!r} has no training samples")
    encoded = [encode_corpus(c.train, model.vocab, cfg.max_len) for c in corpora]
    dev = {c.name: encode_corpus(c.dev, model.vocab, cfg.max_len) for c in corpora if c.dev}
    n = num_batches([len(e) for e in encoded], cfg.batch_size)
    streams: dict[tuple[int, int], list[Batch]] = {}
    state = AdamState()
    history: list[dict] = []

    for unit in schedule(cfg.protocol, len(corpora), cfg.epochs, n):
        losses: dict[int, list[float]] = {}
        for d, e, b in unit.steps:
            key = (d, e)
            if key not in streams:
                for old in [k for k in streams if k[1] != e]:
                    del streams[old]
                streams[key] = domain_stream(encoded[d], cfg.batch_size, n, cfg.seed, e, d)
            loss = train_on_batch(model, streams[key][b], d, state, cfg)
            losses.setdefault(d, []).append(loss)
            if on_batch is not None:
                on_batch(d, b, loss)
        record = {
            "epoch": unit.epoch + 1,
            "protocol": cfg.protocol,
            "stage": None if unit.stage is None else names[int(unit.stage)],
            "loss": {names[d]: float(np.mean(v)) for d, v in sorted(losses.items())},
            "steps": state.steps,
        }
        if dev:
            rep = evaluate_encoded(model, dev)
            record["metrics"] = {**{k: v.as_dict() for k, v in rep.domains.items()}, "overall": rep.overall.as_dict()}
        history.append(record)
        log.info("epoch %d %s loss %s", record["epoch"], record["stage"] or "", record["loss"])
        if on_record is not None:
            on_record(record)
    return model, history


def write_history(path: str | Path, history: Sequence[dict]) -> None:
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in history))


def read_history(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
