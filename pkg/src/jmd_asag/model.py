"""The joint multi-domain model and its generic-only / domain-only ablations.

In ``jmd`` mode a sample of domain d is scored by ``softmax(S_d + S_g)``;
``generic`` keeps only ``S_g`` and ``domain`` keeps only the ``S_d``.
Domain indices are 0-based positions in ``domain_names``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .data import Batch, Sample, encode_texts
from .embeddings import EmbeddingTable, Vocab, load_pretrained
from .errors import ConfigError, ContractError, DomainError
from .scorer import ScorerParams, score_batch
from .tensor import Tensor

log = logging.getLogger(__name__)

GENERIC_STREAM = 0


@dataclass
class JmdModel:
    config: ModelConfig
    vocab: Vocab
    embedding: EmbeddingTable
    domain_names: list[str]
    domain_scorers: list[ScorerParams]
    generic_scorer: ScorerParams | None
    scheme: str = "2way"

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def k(self) -> int:
        return len(self.domain_names)

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    def domain_index(self, domain: int | str | None) -> int | None:
        """Resolve a name or index; unknown names map to None (generic fallback)."""
        if domain is None:
            return None
        if isinstance(domain, (int, np.integer)):
            if not 0 <= domain < self.k:
                raise DomainError(f"domain index {domain} outside [0, {self.k})")
            return int(domain)
        try:
            return self.domain_names.index(domain)
        except ValueError:
            return None

    def scorers(self) -> dict[str, ScorerParams]:
        out = {}
        if self.generic_scorer is not None:
            out["generic"] = self.generic_scorer
        for i, s in enumerate(self.domain_scorers):
            out[f"domain[{i}]"] = s
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"embedding": self.embedding.matrix}
        for prefix, s in self.scorers().items():
            for name, t in s.tensors().items():
                params[f"{prefix}.{name}"] = t
        return params

    def active_parameters(self, domain: int) -> dict[str, Tensor]:
        """Parameters a training step on ``domain`` is allowed to touch."""
        params = {"embedding": self.embedding.matrix}
        active = []
        if self.mode in ("jmd", "generic"):
            active.append(("generic", self.generic_scorer))
        if self.mode in ("jmd", "domain"):
            active.append((f"domain[{domain}]", self.domain_scorers[domain]))
        for prefix, s in active:
            for name, t in s.tensors().items():
                params[f"{prefix}.{name}"] = t
        return params


def init_model(
    cfg: ModelConfig,
    vocab: Vocab,
    domain_names: Sequence[str],
    pretrained_path: str | Path | None = None,
    seed: int = 0,
    scheme: str = "2way",
) -> JmdModel:
    """Build k+1 (or fewer, per mode) independently seeded scorers over one shared table.

    Scorer streams are fixed by role (generic = 0, domain i = i + 1), so an
    ablation starts from exactly the weights the joint model would.
    """
    cfg.validate()
    names = list(domain_names)
    if not names:
        raise ConfigError("need at least one domain")
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate domain names {names}")
    table = load_pretrained(pretrained_path, vocab, cfg.embedding_dim, seed)

    def make(stream: int, prefix: str) -> ScorerParams:
        rng = np.random.default_rng([seed, 0x5C0, stream])
        return ScorerParams.init(cfg.embedding_dim, cfg.hidden_size, cfg.n_classes, rng, prefix)

    generic = make(GENERIC_STREAM, "generic.") if cfg.mode in ("jmd", "generic") else None
    domains = []
    if cfg.mode in ("jmd", "domain"):
        domains = [make(i + 1, f"domain[{i}].") for i in range(len(names))]
    return JmdModel(cfg, vocab, table, names, domains, generic, scheme)


# ---------------------------------------------------------------------------
# forward


def logits_batch(model: JmdModel, batch: Batch, domain: int | None) -> Tensor:
    """Pre-softmax scores (N, c) for a domain-homogeneous batch.

    ``domain=None`` means the domain is unknown and only the generic scorer is used.
    """
    args = (model.embedding, batch.ref_ids, batch.ref_len, batch.stu_ids, batch.stu_len)
    if domain is None:
        if model.generic_scorer is None:
            raise DomainError("unknown domain and the model has no generic scorer to fall back on")
        return score_batch(model.generic_scorer, *args)
    if not 0 <= domain < model.k:
        raise DomainError(f"domain index {domain} outside [0, {model.k})")
    if model.mode == "generic":
        return score_batch(model.generic_scorer, *args)
    s_d = score_batch(model.domain_scorers[domain], *args)
    if model.mode == "domain":
        return s_d
    return T.add(s_d, score_batch(model.generic_scorer, *args))


def forward_batch(model: JmdModel, batch: Batch, domain: int | None) -> Tensor:
    return T.softmax(logits_batch(model, batch, domain), axis=-1)


def _single_batch(model: JmdModel, reference: str, student: str, max_len: int) -> Batch:
    ref_ids, ref_len = encode_texts([reference], model.vocab, max_len)
    stu_ids, stu_len = encode_texts([student], model.vocab, max_len)
    if ref_len[0] == 0 or stu_len[0] == 0:
        raise ContractError("reference and student answers must contain at least one token")
    return Batch(0, ref_ids, ref_len, stu_ids, stu_len, np.zeros(1, dtype=np.int64))


def resolve_domain(model: JmdModel, domain: int | str | None) -> int | None:
    idx = model.domain_index(domain)
    if idx is None:
        log.warning("unknown domain %r: falling back to the generic scorer", domain)
    return idx


def forward(model: JmdModel, reference: str, student: str, domain: int | str | None, max_len: int = 50) -> np.ndarray:
    """Class probabilities for one (reference, student) pair."""
    idx = resolve_domain(model, domain)
    probs = forward_batch(model, _single_batch(model, reference, student, max_len), idx)
    return probs.data[0]


def argmax_label(probs: np.ndarray) -> np.ndarray | int:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(probs, axis=-1)


def predict(model: JmdModel, sample: Sample, max_len: int = 50) -> int:
    return int(argmax_label(forward(model, sample.reference, sample.student, sample.domain, max_len)))


def predict_encoded(model: JmdModel, enc, domain: int | None, chunk: int = 256) -> np.ndarray:
    """Argmax predictions for an encoded corpus, evaluated in chunks without a tape."""
    preds = []
    for start in range(0, len(enc), chunk):
        idx = np.arange(start, min(start + chunk, len(enc)))
        logits = logits_batch(model, enc.take(idx, domain if domain is not None else 0), domain)
        preds.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


# ---------------------------------------------------------------------------
# checkpoint: magic line, 8-byte header length, JSON header, raw little-endian float64 blob

MAGIC = b"JMDCKPT1\n"


def save_checkpoint(model: JmdModel, path: str | Path, meta: dict | None = None) -> None:
    """Write every tensor plus what is needed to rebuild the model.

    ``meta`` (e.g. config hash, seed) is stored verbatim; see :func:`checkpoint_meta`.
    """
    params = model.named_parameters()
    entries, blobs, offset = [], [], 0
    for name, t in params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": 1,
        "config": asdict(model.config),
        "scheme": model.scheme,
        "domains": model.domain_names,
        "vocab": model.vocab.corpus_tokens,
        "pretrained_rows": np.flatnonzero(model.embedding.pretrained).tolist(),
        "tensors": entries,
        "meta": dict(meta or {}),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def _read(path: Path) -> tuple[dict, bytes, int]:
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None
    if not blob.startswith(MAGIC) or len(blob) < len(MAGIC) + 8:
        raise ConfigError(f"{path} is not a model checkpoint")
    pos = len(MAGIC)
    (n,) = struct.unpack("<Q", blob[pos : pos + 8])
    pos += 8
    try:
        header = json.loads(blob[pos : pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ConfigError(f"{path}: corrupt checkpoint header") from None
    return header, blob, pos + n


def checkpoint_meta(path: str | Path) -> dict:
    return dict(_read(Path(path))[0].get("meta", {}))


def load_checkpoint(path: str | Path) -> JmdModel:
    path = Path(path)
    header, blob, pos = _read(path)
    cfg = ModelConfig(**header["config"])
    vocab = Vocab(header["vocab"])
    # seed is irrelevant: every tensor is overwritten below
    model = init_model(cfg, vocab, header["domains"], None, seed=0, scheme=header["scheme"])
    model.embedding.pretrained[header["pretrained_rows"]] = True
    params = model.named_parameters()
    stored = {e["name"]: e for e in header["tensors"]}
    if set(stored) != set(params):
        raise ConfigError(f"{path}: tensor set does not match the model layout")
    for name, t in params.items():
        e = stored[name]
        if tuple(e["shape"]) != t.shape:
            raise ConfigError(f"{path}: tensor {name} has shape {e['shape']}, expected {list(t.shape)}")
        start = pos + e["offset"]
        if start + e["nbytes"] > len(blob):
            raise ConfigError(f"{path}: checkpoint is truncated")
        t.data[...] = np.frombuffer(blob[start : start + e["nbytes"]], dtype="<f8").reshape(t.shape)
    return model


def parameter_bytes(scorer: ScorerParams) -> bytes:
    """Serialized parameters of one scorer, for byte-level comparisons."""
    return b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes() for t in scorer.tensors().values())
