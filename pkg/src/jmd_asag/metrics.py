"""Accuracy, macro-F1 and weighted-F1 with per-domain and pooled reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import EncodedCorpus, LabelScheme, encode_corpus
from .errors import ContractError
from .model import predict_encoded, resolve_domain


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (c, c) int, rows gold, cols predicted
    classes: tuple[str, ...] = ()
    excluded_from_macro: frozenset[int] = frozenset()

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ContractError("cannot add confusion matrices of different size")
        return ConfusionMatrix(self.counts + other.counts, self.classes, self.excluded_from_macro)


def confusion(
    gold: Sequence[int], pred: Sequence[int], c: int, classes: Sequence[str] = (), excluded: frozenset[int] = frozenset()
) -> ConfusionMatrix:
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ContractError(f"gold and pred lengths differ: {len(gold)} vs {len(pred)}")
    if gold.size and (gold.min() < 0 or pred.min() < 0 or gold.max() >= c or pred.max() >= c):
        raise ContractError(f"labels must lie in [0, {c})")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (gold, pred), 1)
    return ConfusionMatrix(counts, tuple(classes), frozenset(excluded))


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    tp = np.diag(cm.counts).astype(float)
    predicted = cm.counts.sum(axis=0)
    support = cm.counts.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return f1


def compute_metrics(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """(accuracy, macro-F1, weighted-F1).

    Macro averages every class not in ``excluded_from_macro``, absent classes
    counting as F1 = 0. Weighted uses gold support over all classes.
    """
    total = cm.total
    if total == 0:
        raise ContractError("metrics of an empty confusion matrix")
    f1 = per_class_f1(cm)
    support = cm.counts.sum(axis=1)
    keep = [i for i in range(len(f1)) if i not in cm.excluded_from_macro]
    accuracy = float(np.trace(cm.counts) / total)
    macro = float(f1[keep].mean())
    weighted = float((f1 * support).sum() / support.sum())
    return accuracy, macro, weighted


@dataclass
class DomainMetrics:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    support: int

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "DomainMetrics":
        acc, macro, weighted = compute_metrics(cm)
        return cls(acc, macro, weighted, cm.total)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "support": self.support,
        }


@dataclass
class MetricsReport:
    domains: dict[str, DomainMetrics]
    overall: DomainMetrics
    confusions: dict[str, ConfusionMatrix] = field(default_factory=dict, repr=False)
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "domains": {k: v.as_dict() for k, v in self.domains.items()},
            "overall": self.overall.as_dict(),
        }

    def to_text(self) -> str:
        rows = [(name, m) for name, m in self.domains.items()] + [("Overall", self.overall)]
        width = max(8, *(len(name) for name, _ in rows))
        head = f"{'Domain':<{width}}  {'Acc':>7}  {'M-F1':>7}  {'W-F1':>7}  {'N':>6}"
        lines = []
        if self.meta:
            lines.append("# " + " ".join(f"{k}={v}" for k, v in sorted(self.meta.items())))
        lines += [head, "-" * len(head)]
        for i, (name, m) in enumerate(rows):
            if i == len(rows) - 1:
                lines.append("-" * len(head))
            lines.append(
                f"{name:<{width}}  {m.accuracy:7.4f}  {m.macro_f1:7.4f}  {m.weighted_f1:7.4f}  {m.support:6d}"
            )
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        out = []
        for name, m in list(self.domains.items()) + [("Overall", self.overall)]:
            rec = {"domain": name, **m.as_dict(), **self.meta}
            out.append(json.dumps(rec, sort_keys=True))
        return "\n".join(out) + "\n"


def report_from_predictions(
    per_domain: dict[str, tuple[np.ndarray, np.ndarray]], scheme: LabelScheme, meta: dict | None = None
) -> MetricsReport:
    """``per_domain`` maps name -> (gold, pred); the overall row pools every domain."""
    if not per_domain:
        raise ContractError("report over zero domains")
    excluded = scheme.excluded_ids()
    cms = {
        name: confusion(g, p, scheme.n_classes, scheme.classes, excluded) for name, (g, p) in per_domain.items()
    }
    pooled = None
    for cm in cms.values():
        pooled = cm if pooled is None else pooled + cm
    return MetricsReport(
        {name: DomainMetrics.from_confusion(cm) for name, cm in cms.items()},
        DomainMetrics.from_confusion(pooled),
        cms,
        dict(meta or {}),
    )


def report(model, corpora, scheme: LabelScheme, max_len: int = 50, split: str = "test", meta: dict | None = None) -> MetricsReport:
    """Evaluate each domain's ``split`` samples with that domain's scorer."""
    per_domain = {}
    for corpus in corpora:
        samples = getattr(corpus, split) or []
        if not samples:
            raise ContractError(f"domain {corpus.name!r} has no {split} samples")
        enc: EncodedCorpus = encode_corpus(samples, model.vocab, max_len)
        idx = resolve_domain(model, corpus.name)
        per_domain[corpus.name] = (enc.labels, predict_encoded(model, enc, idx))
    return report_from_predictions(per_domain, scheme, meta)
