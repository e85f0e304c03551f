import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaopt.history import (
    DimensionMismatch,
    EvaluationHistory,
    filter_training_records,
    record,
    replay_counts,
    write_run_log,
)


def test_record_counts_true_evaluation():
    h = EvaluationHistory(2)
    record(h, (1, 2), 3.0, 1)
    assert (h.n_evals, h.n_evals_f) == (1, 1)


def test_surrogate_record_leaves_true_count():
    h = EvaluationHistory(2)
    for _ in range(5):
        h.record((0, 0), 1.0, 1)
    h.record((0, 0), 1.0, 0)
    assert (h.n_evals, h.n_evals_f) == (6, 5)


def test_dimension_mismatch_rejected():
    h = EvaluationHistory(2)
    with pytest.raises(DimensionMismatch):
        h.record((1, 2, 3), 1.0, 1)


@pytest.mark.parametrize("value", [np.nan, np.inf, -np.inf])
def test_non_finite_value_rejected(value):
    with pytest.raises(ValueError):
        EvaluationHistory(1).record((0.0,), value, 1)


def test_bad_decision_rejected():
    with pytest.raises(ValueError):
        EvaluationHistory(1).record((0.0,), 1.0, 2)


def test_stored_vector_is_a_frozen_copy():
    h = EvaluationHistory(2)
    x = np.array([1.0, 2.0])
    h.record(x, 0.0, 1)
    x[0] = 99
    assert h.records[0].x[0] == 1.0
    with pytest.raises(ValueError):
        h.records[0].x[0] = 5


def test_filter_examples():
    h = EvaluationHistory(1)
    for i, d in enumerate((1, 0, 1, 1)):
        h.record((float(i),), float(i), d)
    got = filter_training_records(h, 2)
    assert [r.x[0] for r in got] == [2.0, 3.0]

    h0 = EvaluationHistory(1)
    for i in range(4):
        h0.record((0.0,), 0.0, 0)
    assert filter_training_records(h0, 10) == []


def test_filter_matches_brute_force_scan(rng):
    h = EvaluationHistory(3)
    for i in range(1200):
        h.record(rng.normal(size=3), float(i), int(rng.random() < 0.42))
    got = filter_training_records(h, 100)
    expected = [r for r in h.records if r.decision == 1][-100:]
    assert len(got) == 100
    assert all(a is b for a, b in zip(got, expected))


def test_filter_rejects_non_positive_size():
    with pytest.raises(ValueError):
        filter_training_records(EvaluationHistory(1), 0)


decisions = st.lists(st.integers(0, 1), max_size=200)


@given(decisions)
def test_replay_reproduces_counts(ds):
    h = EvaluationHistory(1)
    for i, d in enumerate(ds):
        h.record((float(i),), float(i), d)
    assert replay_counts(h.records) == (h.n_evals, h.n_evals_f)
    assert h.n_evals == len(h.records)


@given(decisions, st.integers(1, 50), st.integers(1, 50))
def test_smaller_filter_is_suffix_of_larger(ds, a, b):
    s, s2 = min(a, b), max(a, b)
    h = EvaluationHistory(1)
    for i, d in enumerate(ds):
        h.record((float(i),), float(i), d)
    small = filter_training_records(h, s)
    large = filter_training_records(h, s2)
    assert all(r.decision == 1 for r in large)
    assert large[len(large) - len(small):] == small


def test_run_log_columns(tmp_path):
    h = EvaluationHistory(1)
    h.record((0.0,), 5.0, 0)
    h.record((0.0,), 3.0, 1)
    h.record((0.0,), 1.0, 0)
    h.record((0.0,), 4.0, 1)
    path = tmp_path / "runlog.csv"
    write_run_log(h, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["eval_index", "n_true_evals", "decision", "value", "best_true_value"]
    assert rows[1] == ["1", "0", "0", "5.0", ""]
    assert rows[2][1:] == ["1", "1", "3.0", "3.0"]
    assert rows[3][4] == "3.0"  # surrogate values never count as best
    assert rows[4][1:] == ["2", "1", "4.0", "3.0"]
