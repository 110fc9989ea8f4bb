"""Configuration objects and the plain ``key=value`` config file format.

Precedence: command-line flags > config file > defaults below.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

MODES = ("jmd", "generic", "domain")
PROTOCOLS = ("batch", "epoch", "domain")


@dataclass
class ModelConfig:
    embedding_dim: int = 300
    hidden_size: int = 100
    n_classes: int = 2
    mode: str = "jmd"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.embedding_dim < 1 or self.hidden_size < 1:
            raise ConfigError("embedding_dim and hidden_size must be positive")
        if self.n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.n_classes}")


@dataclass
class TrainConfig:
    protocol: str = "batch"
    epochs: int = 15
    batch_size: int = 32
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    max_len: int = 50
    clip_norm: float | None = None

    @property
    def betas(self) -> tuple[float, float]:
        return self.beta1, self.beta2

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive when set, got {self.clip_norm}")


@dataclass
class RunConfig:
    # model
    mode: str = "jmd"
    embedding_dim: int = 300
    hidden_size: int = 100
    scheme: str = "2way"
    min_count: int = 1
    # training
    protocol: str = "batch"
    epochs: int = 15
    batch_size: int = 32
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    max_len: int = 50
    clip_norm: float | None = None
    # paths
    train: str | None = None
    dev: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None
    run_dir: str | None = None

    def model_config(self, n_classes: int) -> ModelConfig:
        cfg = ModelConfig(self.embedding_dim, self.hidden_size, n_classes, self.mode)
        cfg.validate()
        return cfg

    def train_config(self) -> TrainConfig:
        cfg = TrainConfig(
            protocol=self.protocol,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            seed=self.seed,
            max_len=self.max_len,
            clip_norm=self.clip_norm,
        )
        cfg.validate()
        return cfg

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in dataclasses.asdict(self).items())

    def digest(self) -> str:
        """Short hash of the settings that influence results (paths excluded)."""
        keep = {k: v for k, v in dataclasses.asdict(self).items() if k not in ("checkpoint", "run_dir")}
        text = "".join(f"{k}={_format(v)}\n" for k, v in sorted(keep.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def updated(self, overrides: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(self)}
        clean = {}
        for k, v in overrides.items():
            if v is None:
                continue
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            clean[k] = v
        return dataclasses.replace(self, **clean)


def _format(v: Any) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(name: str, raw: str, annotation: str) -> Any:
    raw = raw.strip()
    optional = "None" in annotation
    if raw == "" or raw.lower() == "none":
        if optional:
            return None
        raise ConfigError(f"config key {name!r} needs a value")
    try:
        if annotation.startswith("int"):
            return int(raw)
        if annotation.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"config key {name!r}: cannot parse {raw!r} as {annotation}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    types = {f.name: str(f.type) for f in fields(RunConfig)}
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value, types[key])
    return out


def load_run_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        cfg = cfg.updated(parse_config_text(p.read_text(), str(p)))
    if overrides:
        cfg = cfg.updated(overrides)
    return cfg
