"""Synthetic multi-domain grading corpus with generic and domain-local paraphrases.

Every reference answer has the shape ``when the N1 P1 , the N2 P2``. A student
answer restates it, possibly flipping the clause order (``the N2 P2 if the N1
P1``), and replaces one predicate:

* generic items swap a predicate for its synonym from a table valid in every
  domain, or for an unrelated predicate;
* domain items draw on a word pool that each domain pairs up differently, so
  a pair that is a synonym in one domain is a wrong answer in the others.

Nouns, frames and word frequencies are the same in every domain; only the
label rule for the shared pool differs, so the domain cannot be guessed from
the text.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DomainCorpus, Sample

NOUNS = (
    "motor bulb string wire switch battery magnet pitch sound light circuit plant seed root leaf "
    "water cloud river rock soil ice metal coin spoon cup ball ramp cart spring fan"
).split()

# (word, synonym) pairs that hold in every domain
GENERIC_PAIRS = [
    ("big", "large"), ("small", "little"), ("fast", "quick"), ("slow", "sluggish"), ("hot", "warm"),
    ("cold", "chilly"), ("bright", "shiny"), ("dark", "dim"), ("loud", "noisy"), ("quiet", "silent"),
    ("wet", "damp"), ("dry", "arid"), ("hard", "firm"), ("soft", "tender"), ("heavy", "weighty"),
    ("light", "airy"), ("tight", "taut"), ("loose", "slack"), ("high", "tall"), ("low", "short"),
    ("full", "filled"), ("empty", "vacant"), ("strong", "sturdy"), ("weak", "feeble"), ("clean", "pure"),
    ("dirty", "muddy"), ("open", "unlocked"), ("closed", "shut"), ("rough", "coarse"), ("smooth", "sleek"),
    ("thick", "dense"), ("thin", "narrow"), ("old", "aged"), ("new", "fresh"), ("rises", "climbs"),
    ("falls", "drops"), ("grows", "expands"), ("shrinks", "contracts"), ("starts", "begins"), ("stops", "halts"),
]

# pool whose synonym pairing is domain-local
DOMAIN_POOL = (
    "runs works moves spins glows shines hums rings flows leaks melts freezes "
    "charges sparks bends snaps"
).split()


@dataclass
class SyntheticConfig:
    n_domains: int = 3
    n_train: int = 600
    n_test: int = 200
    n_dev: int = 0
    domain_fraction: float = 0.5  # share of items whose focus predicate comes from the domain pool
    flip_prob: float = 0.5  # chance a student answer uses the "Y if X" order
    seed: int = 0


def domain_tables(n_domains: int, seed: int) -> list[dict[str, str]]:
    """One symmetric synonym map per domain over DOMAIN_POOL.

    Pairings are drawn so that no pair is shared between two domains.
    """
    rng = np.random.default_rng([seed, 0xD0])
    used: set[frozenset[str]] = set()
    tables = []
    for _ in range(n_domains):
        for _attempt in range(1000):
            order = rng.permutation(len(DOMAIN_POOL))
            pairs = [frozenset((DOMAIN_POOL[order[i]], DOMAIN_POOL[order[i + 1]])) for i in range(0, len(order), 2)]
            if not used.intersection(pairs):
                break
        else:
            raise RuntimeError("could not draw disjoint domain pairings")
        used.update(pairs)
        table = {}
        for pair in pairs:
            a, b = sorted(pair)
            table[a], table[b] = b, a
        tables.append(table)
    return tables


_GENERIC = {a: b for a, b in GENERIC_PAIRS} | {b: a for a, b in GENERIC_PAIRS}
_GENERIC_WORDS = sorted(_GENERIC)


class _Generator:
    def __init__(self, cfg: SyntheticConfig):
        self.cfg = cfg
        self.tables = domain_tables(cfg.n_domains, cfg.seed)

    def _predicate(self, rng, from_domain: bool) -> str:
        pool = DOMAIN_POOL if from_domain else _GENERIC_WORDS
        return pool[rng.integers(len(pool))]

    def _replace(self, rng, word: str, domain: int, correct: bool) -> str:
        if word in _GENERIC:
            if correct:
                return _GENERIC[word]
            choices = [w for w in _GENERIC_WORDS if w not in (word, _GENERIC[word])]
            return choices[rng.integers(len(choices))]
        table = self.tables[domain]
        if correct:
            return table[word]
        # a partner this word has in some other domain: right there, wrong here
        others = [t[word] for i, t in enumerate(self.tables) if i != domain and t[word] != table[word]]
        if not others:
            others = [w for w in DOMAIN_POOL if w not in (word, table[word])]
        return others[rng.integers(len(others))]

    def sample(self, rng, domain: int, name: str, qid: int) -> Sample:
        n1, n2 = rng.choice(len(NOUNS), size=2, replace=False)
        n1, n2 = NOUNS[n1], NOUNS[n2]
        focus_domain = rng.random() < self.cfg.domain_fraction
        slot = rng.integers(2)
        preds = [self._predicate(rng, focus_domain and slot == 0), self._predicate(rng, focus_domain and slot == 1)]
        correct = bool(rng.random() < 0.5)
        new = list(preds)
        new[slot] = self._replace(rng, preds[slot], domain, correct)
        reference = f"when the {n1} {preds[0]} , the {n2} {preds[1]} ."
        if rng.random() < self.cfg.flip_prob:
            student = f"the {n2} {new[1]} if the {n1} {new[0]} ."
        else:
            student = f"when the {n1} {new[0]} , the {n2} {new[1]} ."
        question = f"what happens to the {n2} when the {n1} {preds[0]} ?"
        return Sample(name, f"{name}-q{qid}", question, reference, student, 0 if correct else 1)


def make_corpora(cfg: SyntheticConfig | None = None) -> list[DomainCorpus]:
    """Domain corpora named D1..Dk with 2-way labels (0 = correct, 1 = incorrect)."""
    cfg = cfg or SyntheticConfig()
    gen = _Generator(cfg)
    corpora = []
    for d in range(cfg.n_domains):
        name = f"D{d + 1}"
        rng = np.random.default_rng([cfg.seed, 0xC0, d])
        draw = lambda n, offset: [gen.sample(rng, d, name, offset + i) for i in range(n)]  # noqa: E731
        train = draw(cfg.n_train, 0)
        test = draw(cfg.n_test, cfg.n_train)
        dev = draw(cfg.n_dev, cfg.n_train + cfg.n_test) if cfg.n_dev else None
        corpora.append(DomainCorpus(name, train, test, dev))
    return corpora
