"""Command-line entry points: train, eval, predict, gradcheck, split, convert-semeval, synthetic.

Settings resolve as flag > ``--config`` file > built-in defaults. The run
directory comes from ``--run-dir``, else ``$JMD_RUN_DIR``, else
``runs/<config-hash>-s<seed>``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import MODES, PROTOCOLS, RunConfig, load_run_config
from .data import (
    SCHEMES,
    DomainCorpus,
    convert_semeval,
    get_scheme,
    parse_corpus,
    read_samples,
    split_per_question,
    write_samples,
    write_split,
)
from .embeddings import build_vocab
from .errors import ConfigError, JmdError, NumericError, exit_code_for
from .gradcheck import CASES, run_suite
from .metrics import report
from .model import checkpoint_meta, forward, init_model, load_checkpoint, save_checkpoint
from .trainer import train, write_history

log = logging.getLogger("jmd_asag")

RUN_DIR_ENV = "JMD_RUN_DIR"
CHECKPOINT_NAME = "model.ckpt"


def _add_seed(p: argparse.ArgumentParser, default: int | None = None) -> None:
    p.add_argument("--seed", type=int, default=default, help="random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jmd-asag", description="Joint multi-domain short answer grading.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    # train: every flag defaults to None so the config file can fill the gap
    t = sub.add_parser("train", help="train a model and write checkpoint, history and config")
    t.add_argument("--config", help="key=value config file")
    t.add_argument("--train", help="training TSV (all domains)")
    t.add_argument("--dev", help="optional dev TSV, evaluated after every epoch")
    t.add_argument("--embeddings", help="pretrained embedding text file")
    t.add_argument("--mode", choices=MODES)
    t.add_argument("--protocol", choices=PROTOCOLS)
    t.add_argument("--scheme", choices=sorted(SCHEMES))
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--embedding-dim", type=int)
    t.add_argument("--hidden-size", type=int)
    t.add_argument("--max-len", type=int)
    t.add_argument("--min-count", type=int)
    t.add_argument("--clip-norm", type=float)
    t.add_argument("--checkpoint", help=f"checkpoint path (default <run-dir>/{CHECKPOINT_NAME})")
    t.add_argument("--run-dir", help=f"output directory (default ${RUN_DIR_ENV} or runs/<hash>-s<seed>)")
    _add_seed(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a labelled TSV")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--test", required=True, help="labelled TSV")
    e.add_argument("--scheme", choices=sorted(SCHEMES), help="must match the checkpoint if given")
    e.add_argument("--max-len", type=int, help="defaults to the training value")
    e.add_argument("--out", help="directory for report.txt / report.jsonl (default: run dir)")
    _add_seed(e)

    p = sub.add_parser("predict", help="grade one student answer")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--student", required=True)
    p.add_argument("--domain", help="domain name; unknown or missing uses the generic scorer")
    p.add_argument("--max-len", type=int)
    _add_seed(p)

    g = sub.add_parser("gradcheck", help="finite-difference check of every op")
    g.add_argument("--only", nargs="+", choices=sorted(CASES), help="subset of cases")
    _add_seed(g, 0)

    s = sub.add_parser("split", help="per-question train/test split of a TSV")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--ratio", type=float, default=0.8)
    s.add_argument("--scheme", choices=sorted(SCHEMES), default="2way")
    _add_seed(s, 0)

    c = sub.add_parser("convert-semeval", help="SciEntsBank XML files or directories to TSV")
    c.add_argument("inputs", nargs="+")
    c.add_argument("--out", required=True, help="output TSV")
    c.add_argument("--scheme", choices=sorted(SCHEMES), default="2way")
    _add_seed(c, 0)

    y = sub.add_parser("synthetic", help="write the synthetic multi-domain corpus as TSV files")
    y.add_argument("--out", required=True, help="output directory")
    y.add_argument("--domains", type=int, default=3)
    y.add_argument("--n-train", type=int, default=600)
    y.add_argument("--n-test", type=int, default=200)
    y.add_argument("--n-dev", type=int, default=200)
    _add_seed(y, 0)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _resolve_run_dir(cfg: RunConfig) -> Path:
    if cfg.run_dir:
        return Path(cfg.run_dir)
    env = os.environ.get(RUN_DIR_ENV)
    if env:
        return Path(env)
    return Path("runs") / f"{cfg.digest()}-s{cfg.seed}"


def _merge(target: list[DomainCorpus], extra: list[DomainCorpus], split: str) -> None:
    """Attach ``split`` samples from ``extra`` to the matching training domains."""
    by_name = {c.name: c for c in target}
    for c in extra:
        if c.name not in by_name:
            raise ConfigError(f"{split} domain {c.name!r} does not occur in the training data")
        setattr(by_name[c.name], split, getattr(c, split))


def _write_report(rep, out_dir: Path, stem: str = "report") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.txt").write_text(rep.to_text())
    (out_dir / f"{stem}.jsonl").write_text(rep.to_jsonl())


# ---------------------------------------------------------------------------
# commands


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {
        k: getattr(args, k)
        for k in (
            "train", "dev", "embeddings", "mode", "protocol", "scheme", "epochs", "batch_size", "lr",
            "embedding_dim", "hidden_size", "max_len", "min_count", "clip_norm", "checkpoint", "run_dir", "seed",
        )
    }
    cfg = load_run_config(args.config, overrides)
    if not cfg.train:
        raise ConfigError("no training data: pass --train or set train= in the config file")
    scheme = get_scheme(cfg.scheme)
    tcfg = cfg.train_config()
    mcfg = cfg.model_config(scheme.n_classes)

    run_dir = _resolve_run_dir(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.to_text())

    corpora = parse_corpus(cfg.train, scheme, "train")
    if cfg.dev:
        _merge(corpora, parse_corpus(cfg.dev, scheme, "dev"), "dev")
    vocab = build_vocab((s for c in corpora for s in c.train), cfg.min_count)
    model = init_model(mcfg, vocab, [c.name for c in corpora], cfg.embeddings, cfg.seed, scheme.name)
    found, total = model.embedding.coverage
    log.info("vocab %d tokens, %d/%d from pretrained file, run dir %s", len(vocab), found, total, run_dir)

    model, history = train(model, corpora, tcfg)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else run_dir / CHECKPOINT_NAME
    meta = {"config_hash": cfg.digest(), "seed": cfg.seed, "max_len": cfg.max_len}
    save_checkpoint(model, ckpt, meta)
    write_history(run_dir / "history.jsonl", history)
    last = history[-1]
    print(f"trained {cfg.mode}/{cfg.protocol} on {len(corpora)} domains, {last['steps']} steps -> {ckpt}")
    if cfg.dev:
        rep = report(model, corpora, scheme, cfg.max_len, split="dev", meta=meta)
        _write_report(rep, run_dir, "dev_report")
        print(rep.to_text(), end="")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    meta = checkpoint_meta(args.checkpoint)
    if args.scheme and args.scheme != model.scheme:
        raise ConfigError(f"--scheme {args.scheme} does not match the checkpoint's scheme {model.scheme}")
    scheme = get_scheme(model.scheme)
    max_len = args.max_len or meta.get("max_len", 50)
    corpora = parse_corpus(args.test, scheme, "test")
    meta = {"config_hash": meta.get("config_hash", ""), "seed": meta.get("seed", args.seed)}
    rep = report(model, corpora, scheme, max_len, split="test", meta=meta)
    out = Path(args.out) if args.out else Path(os.environ.get(RUN_DIR_ENV) or Path(args.checkpoint).parent)
    _write_report(rep, out)
    print(rep.to_text(), end="")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.checkpoint)
    max_len = args.max_len or checkpoint_meta(args.checkpoint).get("max_len", 50)
    probs = forward(model, args.reference, args.student, args.domain, max_len)
    classes = get_scheme(model.scheme).classes
    for name, p in zip(classes, probs):
        print(f"{name}\t{p:.6f}")
    print(f"label\t{classes[int(np.argmax(probs))]}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    rep = run_suite(args.seed, args.only)
    print(rep.to_text(), end="")
    if not rep.passed:
        raise NumericError("gradient check failed for: " + ", ".join(rep.failures))
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    scheme = get_scheme(args.scheme)
    samples = read_samples(args.input, scheme)
    tr, te = split_per_question(samples, args.ratio, args.seed)
    write_split(args.out, tr, te, scheme, args.seed, args.ratio)
    print(f"{len(tr)} train / {len(te)} test -> {args.out}")
    return 0


def cmd_convert_semeval(args: argparse.Namespace) -> int:
    paths: list[Path] = []
    for item in args.inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.rglob("*.xml")))
        elif p.exists():
            paths.append(p)
        else:
            raise ConfigError(f"input not found: {p}")
    if not paths:
        raise ConfigError("no XML files found")
    scheme = get_scheme(args.scheme)
    samples = convert_semeval(paths, scheme)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_samples(args.out, samples, scheme)
    print(f"{len(samples)} samples from {len(paths)} files -> {args.out}")
    return 0


def cmd_synthetic(args: argparse.Namespace) -> int:
    from .synthetic import SyntheticConfig, make_corpora

    cfg = SyntheticConfig(args.domains, args.n_train, args.n_test, args.n_dev, seed=args.seed)
    corpora = make_corpora(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scheme = get_scheme("2way")
    for split in ("train", "test", "dev"):
        samples = [s for c in corpora for s in (getattr(c, split) or [])]
        if samples:
            write_samples(out / f"{split}.tsv", samples, scheme)
    print(f"{len(corpora)} domains -> {out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "gradcheck": cmd_gradcheck,
    "split": cmd_split,
    "convert-semeval": cmd_convert_semeval,
    "synthetic": cmd_synthetic,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit status
        if args.verbose or not isinstance(exc, JmdError):
            log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
