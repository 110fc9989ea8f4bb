from __future__ import annotations

import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jmd_asag.data import (
    SCHEMES,
    Sample,
    convert_semeval,
    get_scheme,
    make_batches,
    parse_corpus,
    read_samples,
    split_per_question,
    tokenize,
    write_samples,
    write_split,
)
from jmd_asag.embeddings import build_vocab
from jmd_asag.errors import ConfigError, LabelError, ParseError, SchemaError

from conftest import make_sample

HEADER = "domain\tquestion_id\tquestion\treference\tstudent\tlabel\n"
TWO_WAY = get_scheme("2way")


def write(tmp_path, body, header=HEADER, name="c.tsv"):
    p = tmp_path / name
    p.write_text(header + body)
    return p


class TestSchemes:
    def test_classes(self):
        assert SCHEMES["2way"].classes == ("correct", "incorrect")
        assert SCHEMES["3way"].classes == ("correct", "incorrect", "contradictory")
        assert SCHEMES["5way"].classes[-1] == "non_domain"
        assert SCHEMES["5way"].excluded_ids() == {4}
        assert SCHEMES["industry3"].n_classes == 3

    @pytest.mark.parametrize("raw", ["partially_correct_incomplete", "Partially Correct", "partially-correct"])
    def test_aliases(self, raw):
        assert SCHEMES["5way"].index(raw) == 1

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            get_scheme("7way")


class TestTokenize:
    def test_sentence(self):
        assert tokenize("The pitch would be higher!") == ["the", "pitch", "would", "be", "higher", "!"]

    def test_trailing_dot(self):
        assert tokenize("X runs.") == ["x", "runs", "."]

    def test_inner_punctuation_kept(self):
        assert tokenize("(don't) stop...") == ["(", "don't", ")", "stop", ".", ".", "."]

    @given(st.lists(st.from_regex(r"[a-z0-9]{1,8}", fullmatch=True), max_size=12))
    def test_round_trip(self, tokens):
        assert tokenize(" ".join(tokens)) == tokens


class TestParse:
    def test_two_domains(self, tmp_path):
        p = write(tmp_path, "A\tq1\tq?\tref a\tstu a\tcorrect\nB\tq2\tq?\tref b\tstu b\tincorrect\n")
        corpora = parse_corpus(p, TWO_WAY)
        assert [c.name for c in corpora] == ["A", "B"]
        assert [len(c.train) for c in corpora] == [1, 1]
        assert corpora[1].train[0].label == 1

    def test_bad_label_names_line(self, tmp_path):
        p = write(tmp_path, "A\tq1\tq?\tr\ts\tcorrect\nA\tq1\tq?\tr\ts\tmaybe\n")
        with pytest.raises(LabelError, match="line 3"):
            parse_corpus(p, TWO_WAY)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "q1\tq?\tr\ts\tcorrect\n", header="question_id\tquestion\treference\tstudent\tlabel\n")
        with pytest.raises(SchemaError, match="domain"):
            read_samples(p, TWO_WAY)

    def test_wrong_arity(self, tmp_path):
        p = write(tmp_path, "A\tq1\tr\ts\tcorrect\n")
        with pytest.raises(ParseError, match="line 2"):
            read_samples(p, TWO_WAY)

    def test_empty_answer(self, tmp_path):
        p = write(tmp_path, "A\tq1\tq?\t  \ts\tcorrect\n")
        with pytest.raises(ParseError):
            read_samples(p, TWO_WAY)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            read_samples(tmp_path / "nope.tsv", TWO_WAY)

    def test_round_trip(self, tmp_path, tiny_corpora):
        samples = [s for c in tiny_corpora for s in c.train]
        write_samples(tmp_path / "x.tsv", samples, TWO_WAY)
        assert read_samples(tmp_path / "x.tsv", TWO_WAY) == samples

    @pytest.mark.parametrize("split", ["test", "dev"])
    def test_split_attribute(self, tmp_path, split):
        p = write(tmp_path, "A\tq1\tq?\tr\ts\tcorrect\n")
        (c,) = parse_corpus(p, TWO_WAY, split)
        assert len(getattr(c, split)) == 1 and not c.train


def question_samples(counts):
    out = []
    for q, n in enumerate(counts):
        out += [make_sample("A", f"q{q}", stu=f"answer {q} {i}") for i in range(n)]
    return out


class TestSplit:
    def test_five_answers(self):
        tr, te = split_per_question(question_samples([5]), 0.8, seed=0)
        assert (len(tr), len(te)) == (4, 1)

    def test_single_answer_goes_to_train(self):
        tr, te = split_per_question(question_samples([1]), 0.8, seed=0)
        assert (len(tr), len(te)) == (1, 0)

    def test_float_ceiling_edge(self):
        # 0.1 * 30 rounds up to 4 without care
        tr, _ = split_per_question(question_samples([30]), 0.1, seed=0)
        assert len(tr) == 3

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 9), min_size=1, max_size=6), st.floats(0.05, 0.95), st.integers(0, 99))
    def test_partition(self, counts, ratio, seed):
        samples = question_samples(counts)
        tr, te = split_per_question(samples, ratio, seed)
        assert Counter(tr) + Counter(te) == Counter(samples)
        assert not set(tr) & set(te)
        for q, n in enumerate(counts):
            k = sum(s.question_id == f"q{q}" for s in tr)
            assert abs(k - ratio * n) <= 1

    def test_seeded(self):
        s = question_samples([6, 7])
        assert split_per_question(s, 0.5, 3) == split_per_question(s, 0.5, 3)

    def test_bad_ratio(self):
        with pytest.raises(ConfigError):
            split_per_question(question_samples([2]), 1.0)

    def test_manifest(self, tmp_path):
        tr, te = split_per_question(question_samples([5, 3]), 0.8, seed=4)
        write_split(tmp_path, tr, te, TWO_WAY, 4, 0.8)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["seed"] == 4 and man["ratio"] == 0.8
        assert man["train"]["count"] == len(tr) and man["test"]["count"] == len(te)


class TestBatches:
    def setup_method(self):
        self.samples = [make_sample(stu=f"answer number {i}", label=i % 2) for i in range(70)]
        self.vocab = build_vocab(self.samples)

    def test_sizes(self):
        batches = make_batches(self.samples, 32, 50, self.vocab, seed=0, epoch=0)
        assert [len(b) for b in batches] == [32, 32, 6]

    def test_deterministic(self):
        a = make_batches(self.samples, 32, 50, self.vocab, seed=1, epoch=2)
        b = make_batches(self.samples, 32, 50, self.vocab, seed=1, epoch=2)
        c = make_batches(self.samples, 32, 50, self.vocab, seed=1, epoch=3)
        assert all(np.array_equal(x.stu_ids, y.stu_ids) for x, y in zip(a, b))
        assert not all(np.array_equal(x.stu_ids, y.stu_ids) for x, y in zip(a, c))

    def test_each_sample_once(self):
        batches = make_batches(self.samples, 32, 50, self.vocab, seed=0, epoch=0)
        rows = Counter(tuple(r) for b in batches for r in b.stu_ids)
        want = Counter(tuple(r) for r in make_batches(self.samples, 70, 50, self.vocab, 9, 9)[0].stu_ids)
        assert rows == want and sum(rows.values()) == 70

    def test_empty(self):
        with pytest.raises(ConfigError):
            make_batches([], 32, 50, self.vocab, 0, 0)


SEMEVAL = """<?xml version="1.0" encoding="UTF-8"?>
<question id="EM-21b" module="EM" qtype="Q_EXPLAIN">
  <questionText>Why does the bulb light?</questionText>
  <referenceAnswers>
    <referenceAnswer category="GOOD" id="EM-21b.a2">It is in a closed path.</referenceAnswer>
    <referenceAnswer category="BEST" id="EM-21b.a1">The bulb is in a closed circuit.</referenceAnswer>
  </referenceAnswers>
  <studentAnswers>
    <studentAnswer accuracy="correct" id="s1">it is in a closed circuit</studentAnswer>
    <studentAnswer accuracy="partially_correct_incomplete" id="s2">circuit</studentAnswer>
    <studentAnswer accuracy="non_domain" id="s3">i dunno</studentAnswer>
  </studentAnswers>
</question>
"""


class TestSemeval:
    def test_convert(self, tmp_path):
        f = tmp_path / "EM-21b.xml"
        f.write_text(SEMEVAL)
        samples = convert_semeval([f], get_scheme("5way"))
        assert [s.label for s in samples] == [0, 1, 4]
        assert samples[0].domain == "EM" and samples[0].reference == "The bulb is in a closed circuit."

    def test_label_outside_scheme(self, tmp_path):
        f = tmp_path / "EM-21b.xml"
        f.write_text(SEMEVAL)
        with pytest.raises(LabelError):
            convert_semeval([f], TWO_WAY)

    def test_malformed(self, tmp_path):
        f = tmp_path / "bad.xml"
        f.write_text("<question")
        with pytest.raises(ParseError):
            convert_semeval([f], TWO_WAY)
