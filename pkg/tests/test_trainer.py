from __future__ import annotations

import math
import statistics

import numpy as np
import pytest

from jmd_asag import tensor as T
from jmd_asag.config import ModelConfig, TrainConfig
from jmd_asag.data import DomainCorpus, encode_corpus
from jmd_asag.embeddings import build_vocab
from jmd_asag.errors import ConfigError, ContractError, LabelError, NumericError
from jmd_asag.model import init_model, parameter_bytes
from jmd_asag.synthetic import SyntheticConfig, make_corpora
from jmd_asag.tensor import Tape
from jmd_asag.trainer import (
    AdamState,
    adam_step,
    cross_entropy,
    domain_stream,
    num_batches,
    read_history,
    schedule,
    train,
    train_on_batch,
    write_history,
)

from conftest import make_sample


class TestCrossEntropy:
    def test_one_hot_is_zero(self):
        assert cross_entropy(T.Tensor([[1.0, 0.0], [0.0, 1.0]]), [0, 1]).item() == 0.0

    def test_uniform(self):
        assert cross_entropy(T.Tensor(np.full((2, 3), 1 / 3)), [0, 2]).item() == pytest.approx(math.log(3))

    def test_gradient_wrt_logits(self, rng):
        z = T.parameter(rng.normal(size=(4, 3)))
        labels = np.array([0, 2, 1, 2])
        tape = Tape()
        with tape:
            loss = cross_entropy(T.softmax(z, axis=-1), labels)
        T.backward(loss, tape)
        p = np.exp(z.data) / np.exp(z.data).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(z.grad, (p - np.eye(3)[labels]) / 4, atol=1e-12)

    def test_label_range(self):
        with pytest.raises(LabelError):
            cross_entropy(T.Tensor([[0.5, 0.5]]), [2])

    def test_shape(self):
        with pytest.raises(ContractError):
            cross_entropy(T.Tensor([[0.5, 0.5]]), [0, 1])


class TestAdam:
    def test_first_step_closed_form(self):
        cfg = TrainConfig()
        p = T.parameter(np.zeros(3))
        p.grad = np.ones(3)
        adam_step(AdamState(), {"p": p}, cfg)
        np.testing.assert_allclose(p.data, -cfg.lr / (1 + cfg.eps), rtol=1e-12)

    def test_zero_gradient(self):
        p = T.parameter([1.0, -2.0])
        state = AdamState()
        for _ in range(3):
            p.grad = np.zeros(2)
            adam_step(state, {"p": p}, TrainConfig())
        assert p.data.tolist() == [1.0, -2.0]

    def test_trajectories_identical(self):
        def run():
            rng = np.random.default_rng(0)
            p, state = T.parameter(np.zeros(4)), AdamState()
            for _ in range(5):
                p.grad = rng.normal(size=4)
                adam_step(state, {"p": p}, TrainConfig())
            return p.data.tobytes()

        assert run() == run()

    def test_per_parameter_step_counts(self):
        a, b = T.parameter([0.0]), T.parameter([0.0])
        state = AdamState()
        for params in ({"a": a, "b": b}, {"a": a}, {"a": a, "b": b}):
            for t in params.values():
                t.grad = np.ones(1)
            adam_step(state, params, TrainConfig())
        assert state.t == {"a": 3, "b": 2} and state.steps == 3

    def test_nan_names_tensor(self):
        p = T.parameter([0.0])
        p.grad = np.array([np.nan])
        with pytest.raises(NumericError, match="generic.W"):
            adam_step(AdamState(), {"generic.W": p}, TrainConfig())
        assert p.data.tolist() == [0.0]


def three_domain_model(mode="jmd", seed=0):
    corpora = make_corpora(SyntheticConfig(n_domains=3, n_train=40, n_test=10, seed=seed))
    vocab = build_vocab([s for c in corpora for s in c.train])
    model = init_model(ModelConfig(4, 3, 2, mode), vocab, [c.name for c in corpora], seed=seed)
    return model, corpora


def batch(model, corpus, domain, n=8):
    enc = encode_corpus(corpus.train[:n], model.vocab, 50)
    return enc.take(np.arange(len(enc)), domain)


class TestTrainOnBatch:
    def test_jmd_step_only_touches_own_scorer(self):
        model, corpora = three_domain_model()
        before = {k: parameter_bytes(s) for k, s in model.scorers().items()}
        train_on_batch(model, batch(model, corpora[1], 1), 1, AdamState(), TrainConfig())
        after = {k: parameter_bytes(s) for k, s in model.scorers().items()}
        assert after["domain[0]"] == before["domain[0]"] and after["domain[2]"] == before["domain[2]"]
        assert after["domain[1]"] != before["domain[1]"] and after["generic"] != before["generic"]

    @pytest.mark.parametrize("mode,present", [("generic", ["generic"]), ("domain", ["domain[0]", "domain[1]", "domain[2]"])])
    def test_mode_isolation(self, mode, present):
        model, corpora = three_domain_model(mode)
        assert list(model.scorers()) == present
        before = {k: parameter_bytes(s) for k, s in model.scorers().items()}
        train_on_batch(model, batch(model, corpora[0], 0), 0, AdamState(), TrainConfig())
        changed = [k for k, s in model.scorers().items() if parameter_bytes(s) != before[k]]
        assert changed == (["generic"] if mode == "generic" else ["domain[0]"])

    def test_pad_row_stays_zero(self):
        model, corpora = three_domain_model()
        state = AdamState()
        for _ in range(3):
            train_on_batch(model, batch(model, corpora[0], 0), 0, state, TrainConfig(lr=0.1))
        assert not model.embedding.matrix.data[0].any()

    def test_mixed_batch_rejected(self):
        model, corpora = three_domain_model()
        b = batch(model, corpora[0], 0)
        b.domains[0] = 1
        with pytest.raises(ContractError):
            train_on_batch(model, b, 0, AdamState(), TrainConfig())

    def test_wrong_domain_rejected(self):
        model, corpora = three_domain_model()
        with pytest.raises(ContractError):
            train_on_batch(model, batch(model, corpora[0], 0), 1, AdamState(), TrainConfig())

    def test_overfit_single_batch(self):
        samples = [make_sample(ref="the bulb glows", stu=s, label=y)
                   for s, y in [("the bulb glows", 0), ("the bulb melts", 1), ("the bulb glows", 0), ("a rock falls", 1)]]
        vocab = build_vocab(samples)
        model = init_model(ModelConfig(6, 4, 2, "jmd"), vocab, ["A"], seed=0)
        enc = encode_corpus(samples, vocab, 50)
        b = enc.take(np.arange(4), 0)
        state, cfg = AdamState(), TrainConfig(lr=0.01)
        losses = [train_on_batch(model, b, 0, state, cfg) for _ in range(20)]
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]


class TestSchedule:
    def test_batch_order(self):
        (unit,) = schedule("batch", 2, 1, 3)
        assert [(d, b) for d, _, b in unit.steps] == [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 2)]

    def test_epoch_order(self):
        units = list(schedule("epoch", 2, 2, 2))
        assert [(d, e, b) for u in units for d, e, b in u.steps][:4] == [(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)]

    def test_domain_order(self):
        units = list(schedule("domain", 2, 2, 1))
        assert [(u.stage, u.epoch) for u in units] == [("0", 0), ("0", 1), ("1", 0), ("1", 1)]

    def test_unknown(self):
        with pytest.raises(ConfigError):
            list(schedule("random", 2, 1, 1))

    def test_num_batches_uses_largest(self):
        assert num_batches([70, 10], 32) == 3

    def test_short_domain_wraps_with_fresh_shuffle(self):
        samples = [make_sample(stu=f"s {i}") for i in range(5)]
        enc = encode_corpus(samples, build_vocab(samples), 10)
        stream = domain_stream(enc, 2, 6, seed=0, epoch=0, domain=0)
        assert [len(b) for b in stream] == [2, 2, 1, 2, 2, 1]
        first = np.concatenate([b.stu_ids[:, 1] for b in stream[:3]])
        second = np.concatenate([b.stu_ids[:, 1] for b in stream[3:]])
        assert sorted(first.tolist()) == sorted(second.tolist())
        assert first.tolist() != second.tolist()


class TestTrain:
    def test_single_domain_protocols_agree(self):
        corpora = make_corpora(SyntheticConfig(n_domains=1, n_train=30, n_test=5, seed=2))
        vocab = build_vocab(corpora[0].train)
        finals = []
        for protocol in ("batch", "epoch", "domain"):
            model = init_model(ModelConfig(4, 3, 2), vocab, ["D1"], seed=2)
            train(model, corpora, TrainConfig(protocol=protocol, epochs=2, batch_size=8, seed=2))
            finals.append(b"".join(t.data.tobytes() for t in model.named_parameters().values()))
        assert finals[0] == finals[1] == finals[2]

    def test_visit_order_batch_protocol(self):
        model, corpora = three_domain_model()
        seen = []
        train(model, corpora, TrainConfig(epochs=1, batch_size=16),
              on_batch=lambda d, b, loss: seen.append((d, b)))
        assert seen[:6] == [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
        assert len(seen) == 3 * 3

    def test_deterministic_history(self):
        runs = []
        for _ in range(2):
            model, corpora = three_domain_model()
            for c in corpora:
                c.dev = c.test
            _, hist = train(model, corpora, TrainConfig(epochs=2, batch_size=16))
            runs.append((hist, b"".join(t.data.tobytes() for t in model.named_parameters().values())))
        assert runs[0] == runs[1]

    def test_history_records(self, tmp_path):
        model, corpora = three_domain_model()
        for c in corpora:
            c.dev = c.test
        _, hist = train(model, corpora, TrainConfig(protocol="domain", epochs=2, batch_size=16))
        assert [(r["stage"], r["epoch"]) for r in hist] == [(d, e) for d in ("D1", "D2", "D3") for e in (1, 2)]
        assert set(hist[0]["metrics"]) == {"D1", "D2", "D3", "overall"}
        assert list(hist[0]["loss"]) == ["D1"]
        write_history(tmp_path / "h.jsonl", hist)
        assert read_history(tmp_path / "h.jsonl") == hist

    def test_empty_domain(self):
        model, corpora = three_domain_model()
        corpora[1] = DomainCorpus(corpora[1].name)
        with pytest.raises(ConfigError):
            train(model, corpora, TrainConfig(epochs=1))

    def test_domain_mismatch(self):
        model, corpora = three_domain_model()
        with pytest.raises(ConfigError):
            train(model, corpora[::-1], TrainConfig(epochs=1))


@pytest.mark.slow
def test_domain_protocol_forgets_first_domain():
    drops = []
    for seed in range(3):
        corpora = make_corpora(SyntheticConfig(n_domains=2, n_train=600, n_test=0, n_dev=100, seed=seed))
        vocab = build_vocab([s for c in corpora for s in c.train])
        model = init_model(ModelConfig(32, 32, 2, "jmd"), vocab, ["D1", "D2"], seed=seed)
        _, hist = train(model, corpora, TrainConfig(protocol="domain", epochs=15, lr=0.003, seed=seed))
        ends = {r["stage"]: r["metrics"]["D1"]["macro_f1"] for r in hist if r["epoch"] == 15}
        drops.append(ends["D1"] - ends["D2"])
    assert statistics.median(drops) > 0
