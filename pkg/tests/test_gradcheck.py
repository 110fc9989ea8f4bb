from __future__ import annotations

import time

import numpy as np
import pytest

from jmd_asag import gradcheck, tensor as T
from jmd_asag.gradcheck import CASES, THRESHOLD, relative_error, run_suite


@pytest.mark.parametrize("name", sorted(CASES))
def test_case_under_threshold(name):
    res = gradcheck.check_case(name, CASES[name], seed=0)
    assert res.passed, f"{name}: {res.per_input}"


def test_suite_passes_and_is_fast():
    start = time.perf_counter()
    rep = run_suite(seed=3)
    assert rep.passed, rep.to_text()
    assert time.perf_counter() - start < 10


def test_repeat_is_identical():
    a = run_suite(seed=1, only=["tanh", "composed"])
    b = run_suite(seed=1, only=["tanh", "composed"])
    assert [r.per_input for r in a.results] == [r.per_input for r in b.results]


def _broken_tanh(x):
    x = T.as_tensor(x)
    y = np.tanh(x.data)
    return T._emit(y, (x,), lambda g: (g * (1.0 - y),))  # should be 1 - y**2


def test_corrupted_backward_is_flagged(monkeypatch):
    monkeypatch.setattr(T, "tanh", _broken_tanh)
    rep = run_suite(seed=0, only=["tanh", "lstm_step", "composed", "matmul"])
    assert set(rep.failures) == {"tanh", "lstm_step", "composed"}
    assert "FAIL: tanh" in rep.to_text()


def test_relative_error_definition():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.ones(2), -np.ones(2)) == pytest.approx(1.0)
    assert THRESHOLD == 1e-4


def test_unknown_case():
    with pytest.raises(KeyError):
        run_suite(only=["nope"])
