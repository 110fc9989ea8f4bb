from __future__ import annotations

import numpy as np
import pytest

from jmd_asag.config import ModelConfig
from jmd_asag.data import DomainCorpus, Sample
from jmd_asag.embeddings import build_vocab
from jmd_asag.model import init_model


def make_sample(domain="A", qid="q1", ref="the bulb glows", stu="the bulb is lit", label=0, question="why?"):
    return Sample(domain, qid, question, ref, stu, label)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_corpora():
    """Two tiny domains with a few distinct words each."""
    a = [
        make_sample("A", f"a{i}", f"the wire {w} now", f"the wire {v} now", lab)
        for i, (w, v, lab) in enumerate(
            [("glows", "glows", 0), ("glows", "melts", 1), ("hums", "hums", 0), ("hums", "snaps", 1)] * 3
        )
    ]
    b = [
        make_sample("B", f"b{i}", f"a seed {w}", f"a seed {v}", lab)
        for i, (w, v, lab) in enumerate([("grows", "grows", 0), ("grows", "falls", 1)] * 4)
    ]
    return [DomainCorpus("A", a, a[:4], a[:4]), DomainCorpus("B", b, b[:4], b[:4])]


@pytest.fixture
def tiny_model(tiny_corpora):
    def build(mode="jmd", seed=0, dim=4, hidden=3, n_classes=2):
        vocab = build_vocab([s for c in tiny_corpora for s in c.train])
        cfg = ModelConfig(dim, hidden, n_classes, mode)
        return init_model(cfg, vocab, [c.name for c in tiny_corpora], seed=seed)

    return build


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
