import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from metaopt.history import EvaluationHistory, EvaluationRecord
from metaopt.learners import LearnerSpec
from metaopt.metamodel import (
    MetaModel,
    MetaModelConfig,
    ObjectiveError,
    build_relevator_dataset,
    build_surrogate_dataset,
    decide,
    relevance,
    should_rebuild,
    update_threshold,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


# -- relevance ---------------------------------------------------------------

def test_relevance_examples():
    assert relevance(-1.0, [0.0, 1.0]) == 1.0
    assert relevance(2.0, [1.0, 2.0, 3.0]) == 0.5
    assert relevance(10.0, [0.0, 10.0]) == pytest.approx(1 / 3)


def test_relevance_degenerate_reference():
    assert relevance(2.0, [2.0, 2.0]) == 1.0
    assert relevance(2.5, [2.0, 2.0]) == 0.0


def test_relevance_needs_reference():
    with pytest.raises(ValueError):
        relevance(1.0, [])


@given(finite, st.lists(finite, min_size=1, max_size=30))
def test_relevance_in_unit_interval(fx, fvals):
    assert 0.0 <= relevance(fx, fvals) <= 1.0


@given(finite, finite, st.lists(finite, min_size=1, max_size=30))
def test_relevance_non_increasing(a, b, fvals):
    lo, hi = min(a, b), max(a, b)
    assert relevance(lo, fvals) >= relevance(hi, fvals)


@given(st.lists(finite, min_size=2, max_size=30))
def test_relevance_half_at_mean(fvals):
    avg = float(np.mean(fvals))
    assume(avg > min(fvals))
    assert relevance(avg, fvals) == pytest.approx(0.5, abs=1e-12)


# -- decision and threshold ----------------------------------------------------

def test_decide_is_strict():
    assert decide(0.9, 0.5) == 1
    assert decide(0.5, 0.5) == 0
    assert decide(0.0, 0.0) == 0


def test_threshold_rule():
    assert update_threshold(0.5, [1] * 100, 0.8, 0.01) == pytest.approx(0.51)
    assert update_threshold(0.5, [0] * 100, 0.8, 0.01) == pytest.approx(0.49)
    assert update_threshold(1.0, [1] * 10, 0.8, 0.01) == 1.0
    assert update_threshold(0.0, [0] * 10, 0.8, 0.01) == 0.0
    assert update_threshold(0.3, [], 0.8, 0.01) == 0.3
    assert update_threshold(0.3, [0, 0, 0, 0, 1], 0.8, 0.01) == 0.3


@given(st.floats(0, 1), st.lists(st.integers(0, 1), max_size=50), st.floats(0.01, 0.99))
def test_threshold_stays_in_unit_interval(theta, window, r):
    assert 0.0 <= update_threshold(theta, window, r, 0.3) <= 1.0


def test_rebuild_guard_examples():
    cfg = MetaModelConfig(T1=0, T2=100, I1=0, I2=50)
    assert should_rebuild(100, 5, cfg)
    assert not should_rebuild(120, 5, cfg)
    assert not should_rebuild(0, 5, cfg)
    assert should_rebuild(150, 5, cfg)


@given(st.integers(0, 5), st.integers(0, 300), st.integers(0, 5), st.integers(1, 100),
       st.integers(1, 8), st.integers(0, 3000))
def test_rebuild_guard_matches_definition(t1, t2, i1, i2, k, n):
    assume(k * t1 + t2 >= 1)
    cfg = MetaModelConfig(T1=t1, T2=t2, I1=i1, I2=i2)
    warm, step = k * t1 + t2, k * i1 + i2
    expected = n >= warm and (n - warm) % step == 0
    assert should_rebuild(n, k, cfg) == expected


def test_config_validation():
    with pytest.raises(ValueError):
        MetaModelConfig(r=1.0)
    with pytest.raises(ValueError):
        MetaModelConfig(T1=-1)
    with pytest.raises(ValueError):
        MetaModelConfig(T1=0, T2=0).check(5)


# -- training sets -----------------------------------------------------------

def _records(values):
    return [EvaluationRecord(np.array([float(i), 0.0]), v, 1) for i, v in enumerate(values)]


def test_surrogate_dataset_is_identity():
    ds = build_surrogate_dataset([EvaluationRecord(np.array([1.0, 2.0]), 5.0, 1)])
    assert ds.inputs.tolist() == [[1.0, 2.0]]
    assert ds.targets.tolist() == [5.0]
    assert len(build_surrogate_dataset(_records(range(100)))) == 100


def test_relevator_targets():
    ds = build_relevator_dataset(_records([1.0, 2.0, 3.0]))
    assert ds.targets == pytest.approx([1.0, 0.5, 1 / 3])
    assert build_relevator_dataset(_records([7.0])).targets.tolist() == [1.0]
    assert len(build_relevator_dataset([])) == 0


# -- the wrapper -------------------------------------------------------------

def make_mm(k=2, **cfg):
    return MetaModel(sphere, k, LearnerSpec("KNN"), LearnerSpec("KNN"),
                     MetaModelConfig(**{"T1": 0, "T2": 10, "I1": 0, "I2": 5, **cfg}))


def test_fresh_meta_model_calls_objective():
    mm = make_mm()
    assert mm.surrogate_model is None and mm.relevator_model is None
    assert mm((1.0, 2.0)) == 5.0
    assert (mm.n_evals, mm.n_evals_f) == (1, 1)
    assert mm.history.records[0].decision == 1


def test_post_warmup_surrogate_answer(rng):
    mm = make_mm()
    for _ in range(10):
        mm(rng.uniform(-1, 1, 2))
    mm.theta = 1.0  # nothing beats the threshold: the surrogate answers
    mm.config = MetaModelConfig(T1=0, T2=10, I1=0, I2=5, theta_step=1e-9)
    before = mm.n_evals_f
    x = np.array([0.3, -0.2])
    v = mm(x)
    assert mm.n_evals_f == before
    assert mm.history.records[-1].decision == 0
    assert v == pytest.approx(mm.surrogate_model.predict(x))


def test_every_call_appends_one_record(rng):
    mm = make_mm()
    for i in range(200):
        mm(rng.uniform(-1, 1, 2))
        assert len(mm.history) == mm.n_evals == i + 1
        assert 0.0 <= mm.theta <= 1.0
        assert mm.n_evals_f <= mm.n_evals


def test_non_finite_objective_surfaces():
    mm = MetaModel(lambda x: float("nan"), 1, LearnerSpec("KNN"), LearnerSpec("KNN"))
    with pytest.raises(ObjectiveError):
        mm((0.0,))


def test_dimension_checked():
    with pytest.raises(ValueError):
        make_mm()((1.0, 2.0, 3.0))


def test_synthetic_relevator_tracks_rate():
    """Uniform random relevances: the controller settles near r."""

    class Noise:
        def __init__(self):
            self.rng = np.random.default_rng(3)

        def predict(self, x):
            return float(self.rng.random())

    mm = make_mm(k=1, r=0.8)
    for _ in range(11):  # warm-up, then the first fit
        mm((0.5,))
    mm.relevator_model = Noise()
    mm._fitted_at = mm.n_evals_f  # the scheduled fit is done; keep the synthetic relevator
    mm.config = MetaModelConfig(T1=0, T2=10, I1=0, I2=10**6, r=0.8)
    for _ in range(20000):
        mm((0.5,))
    tail = [r.decision for r in mm.history.records[-10000:]]
    assert 1 - np.mean(tail) == pytest.approx(0.8, abs=0.05)
