"""Corpus ingestion, tokenization, label schemes, splits and batching."""

from __future__ import annotations

import csv
import io
import json
import math
import string
import xml.etree.ElementTree as ET
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, LabelError, ParseError, SchemaError

COLUMNS = ("domain", "question_id", "question", "reference", "student", "label")
_HEADER = "\t".join(COLUMNS)


@dataclass(frozen=True)
class LabelScheme:
    name: str
    classes: tuple[str, ...]
    excluded_from_macro: frozenset[str] = frozenset()

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def index(self, label: str) -> int:
        return self.classes.index(normalize_label(label))

    def excluded_ids(self) -> frozenset[int]:
        return frozenset(self.classes.index(c) for c in self.excluded_from_macro)


SCHEMES: dict[str, LabelScheme] = {
    "2way": LabelScheme("2way", ("correct", "incorrect")),
    "3way": LabelScheme("3way", ("correct", "incorrect", "contradictory")),
    "5way": LabelScheme(
        "5way",
        ("correct", "partially_correct", "contradictory", "irrelevant", "non_domain"),
        excluded_from_macro=frozenset({"non_domain"}),
    ),
    "industry3": LabelScheme("industry3", ("correct", "partially_correct", "incorrect")),
}

# SemEval-2013 spells some labels differently from the canonical names.
_LABEL_ALIASES = {
    "partially_correct_incomplete": "partially_correct",
    "partial": "partially_correct",
    "non-domain": "non_domain",
}


def normalize_label(label: str) -> str:
    key = label.strip().lower().replace(" ", "_").replace("-", "_")
    return _LABEL_ALIASES.get(key, key)


def get_scheme(name: str) -> LabelScheme:
    try:
        return SCHEMES[name]
    except KeyError:
        raise ConfigError(f"unknown label scheme {name!r}; choose from {sorted(SCHEMES)}") from None


@dataclass(frozen=True)
class Sample:
    domain: str
    question_id: str
    question: str
    reference: str
    student: str
    label: int


@dataclass
class DomainCorpus:
    name: str
    train: list[Sample] = field(default_factory=list)
    test: list[Sample] = field(default_factory=list)
    dev: list[Sample] | None = None


# ---------------------------------------------------------------------------
# tokenization

_PUNCT = set(string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel leading/trailing ASCII punctuation.

    >>> tokenize("The pitch would be higher!")
    ['the', 'pitch', 'would', 'be', 'higher', '!']
    """
    tokens: list[str] = []
    for chunk in text.lower().split():
        i, j = 0, len(chunk)
        while i < j and chunk[i] in _PUNCT:
            i += 1
        while j > i and chunk[j - 1] in _PUNCT:
            j -= 1
        tokens.extend(chunk[:i])
        if i < j:
            tokens.append(chunk[i:j])
        tokens.extend(chunk[j:])
    return tokens


# ---------------------------------------------------------------------------
# TSV IO


def read_samples(path: str | Path, scheme: LabelScheme) -> list[Sample]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"corpus file not found: {path}") from None
    rows = list(csv.reader(io.StringIO(text), delimiter="\t", quoting=csv.QUOTE_NONE))
    if not rows:
        raise SchemaError(f"{path}: empty file, expected header {_HEADER!r}")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
    col = {c: header.index(c) for c in COLUMNS}
    samples = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno, str(path))
        rec = {c: row[i] for c, i in col.items()}
        try:
            label = scheme.index(rec["label"])
        except ValueError:
            raise LabelError(
                f"{path}:line {lineno}: label {rec['label']!r} not in scheme {scheme.name} {list(scheme.classes)}"
            ) from None
        for key in ("reference", "student"):
            if not tokenize(rec[key]):
                raise ParseError(f"{key} answer is empty after tokenization", lineno, str(path))
        samples.append(
            Sample(
                domain=rec["domain"].strip(),
                question_id=rec["question_id"].strip(),
                question=rec["question"],
                reference=rec["reference"],
                student=rec["student"],
                label=label,
            )
        )
    return samples


def group_by_domain(samples: Iterable[Sample], split: str = "train") -> list[DomainCorpus]:
    """Bucket samples into one corpus per domain, keeping first-seen order."""
    groups: OrderedDict[str, list[Sample]] = OrderedDict()
    for s in samples:
        groups.setdefault(s.domain, []).append(s)
    corpora = []
    for name, items in groups.items():
        corpus = DomainCorpus(name)
        if split == "dev":
            corpus.dev = items
        else:
            setattr(corpus, split, items)
        corpora.append(corpus)
    return corpora


def parse_corpus(path: str | Path, scheme: LabelScheme, split: str = "train") -> list[DomainCorpus]:
    """Read a canonical TSV into one :class:`DomainCorpus` per domain.

    Samples land in the ``split`` attribute (``train``, ``test`` or ``dev``).
    """
    if split not in ("train", "test", "dev"):
        raise ConfigError(f"unknown split {split!r}")
    return group_by_domain(read_samples(path, scheme), split)


def _clean(cell: str) -> str:
    return " ".join(cell.replace("\t", " ").split())


def write_samples(path: str | Path, samples: Iterable[Sample], scheme: LabelScheme) -> None:
    lines = ["\t".join(COLUMNS)]
    for s in samples:
        fields = (s.domain, s.question_id, s.question, s.reference, s.student, scheme.classes[s.label])
        lines.append("\t".join(_clean(f) for f in fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# splitting


def split_per_question(
    samples: Sequence[Sample], ratio: float = 0.8, seed: int = 0
) -> tuple[list[Sample], list[Sample]]:
    """Seeded per-question split: ``ceil(ratio * n)`` answers of each question go to train.

    Both outputs keep the input order.
    """
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    by_question: dict[tuple[str, str], list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        by_question[(s.domain, s.question_id)].append(i)
    in_train = np.zeros(len(samples), dtype=bool)
    rng = np.random.default_rng(seed)
    for key in sorted(by_question):
        idx = by_question[key]
        n_train = math.ceil(round(ratio * len(idx), 9))  # (0.1 * 3) * 10 == 3.0000000000000004
        order = rng.permutation(len(idx))
        in_train[[idx[j] for j in order[:n_train]]] = True
    train = [s for s, keep in zip(samples, in_train) if keep]
    test = [s for s, keep in zip(samples, in_train) if not keep]
    return train, test


def write_split(out_dir: str | Path, train, test, scheme: LabelScheme, seed: int, ratio: float) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_samples(out / "train.tsv", train, scheme)
    write_samples(out / "test.tsv", test, scheme)
    manifest = {
        "seed": seed,
        "ratio": ratio,
        "scheme": scheme.name,
        "train": {"path": "train.tsv", "count": len(train)},
        "test": {"path": "test.tsv", "count": len(test)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    """Id-encoded, padded samples of a single domain."""

    domain: int
    ref_ids: np.ndarray  # (B, max_len) int64, 0 = padding
    ref_len: np.ndarray  # (B,)
    stu_ids: np.ndarray
    stu_len: np.ndarray
    labels: np.ndarray  # (B,)
    domains: np.ndarray | None = None  # per-sample domain index, for the homogeneity check

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class EncodedCorpus:
    ref_ids: np.ndarray
    ref_len: np.ndarray
    stu_ids: np.ndarray
    stu_len: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray, domain: int) -> Batch:
        return Batch(
            domain=domain,
            ref_ids=self.ref_ids[idx],
            ref_len=self.ref_len[idx],
            stu_ids=self.stu_ids[idx],
            stu_len=self.stu_len[idx],
            labels=self.labels[idx],
            domains=np.full(len(idx), domain, dtype=np.int64),
        )


def encode_texts(texts: Sequence[str], vocab, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    ids = np.zeros((len(texts), max_len), dtype=np.int64)
    lengths = np.zeros(len(texts), dtype=np.int64)
    for row, text in enumerate(texts):
        seq = vocab.encode(tokenize(text))[:max_len]
        ids[row, : len(seq)] = seq
        lengths[row] = len(seq)
    return ids, lengths


def encode_corpus(samples: Sequence[Sample], vocab, max_len: int) -> EncodedCorpus:
    ref_ids, ref_len = encode_texts([s.reference for s in samples], vocab, max_len)
    stu_ids, stu_len = encode_texts([s.student for s in samples], vocab, max_len)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return EncodedCorpus(ref_ids, ref_len, stu_ids, stu_len, labels)


def shuffle_rng(seed: int, epoch: int, domain: int = 0, wrap: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, domain, wrap])


def batches_from_encoded(
    enc: EncodedCorpus, batch_size: int, seed: int, epoch: int, domain: int = 0, wrap: int = 0
) -> list[Batch]:
    if len(enc) == 0:
        raise ConfigError(f"domain {domain} has no samples")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = shuffle_rng(seed, epoch, domain, wrap).permutation(len(enc))
    return [enc.take(order[i : i + batch_size], domain) for i in range(0, len(order), batch_size)]


def make_batches(
    corpus: Sequence[Sample] | DomainCorpus,
    batch_size: int,
    max_len: int,
    vocab,
    seed: int,
    epoch: int,
    domain: int = 0,
    wrap: int = 0,
) -> list[Batch]:
    """Shuffle (keyed by seed, epoch, domain, wrap) and cut into batches; the short tail is kept."""
    samples = corpus.train if isinstance(corpus, DomainCorpus) else corpus
    if not samples:
        raise ConfigError("cannot batch an empty corpus")
    return batches_from_encoded(encode_corpus(samples, vocab, max_len), batch_size, seed, epoch, domain, wrap)


# ---------------------------------------------------------------------------
# SemEval-2013 SciEntsBank XML


def convert_semeval(xml_paths: Iterable[str | Path], scheme: LabelScheme) -> list[Sample]:
    """Turn SciEntsBank question files into canonical samples.

    The domain is the question's ``module`` attribute. The first reference
    answer tagged ``BEST`` (or the first one at all) is used.
    """
    samples = []
    for path in sorted(Path(p) for p in xml_paths):
        try:
            root = ET.parse(path).getroot()
        except ET.ParseError as exc:
            raise ParseError(f"malformed XML: {exc}", path=str(path)) from None
        questions = [root] if root.tag == "question" else root.iter("question")
        for q in questions:
            qid = q.get("id", path.stem)
            domain = q.get("module") or qid.split("-")[0]
            qtext = " ".join((q.findtext("questionText") or "").split())
            refs = q.findall("./referenceAnswers/referenceAnswer")
            if not refs:
                raise ParseError(f"question {qid} has no reference answer", path=str(path))
            best = next((r for r in refs if r.get("category") == "BEST"), refs[0])
            reference = " ".join((best.text or "").split())
            for ans in q.findall("./studentAnswers/studentAnswer"):
                raw = ans.get("accuracy")
                if raw is None:
                    raise ParseError(f"student answer {ans.get('id')} has no accuracy label", path=str(path))
                try:
                    label = scheme.index(raw)
                except ValueError:
                    raise LabelError(f"{path}: label {raw!r} not in scheme {scheme.name}") from None
                student = " ".join((ans.text or "").split())
                if not tokenize(student) or not tokenize(reference):
                    continue
                samples.append(Sample(domain, qid, qtext, reference, student, label))
    return samples
