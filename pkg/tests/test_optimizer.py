import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaopt.learners import LearnerSpec
from metaopt.metamodel import MetaModel, MetaModelConfig
from metaopt.optimizer import (
    ConfigError,
    ConvergenceLog,
    DEConfig,
    Population,
    TrueEvalTracker,
    de_init,
    de_run,
    de_step,
    de_trial,
)


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def box(k, lo=-5.0, hi=5.0):
    return tuple([(lo, hi)] * k)


def test_config_rejects_collapsed_bounds():
    with pytest.raises(ConfigError):
        DEConfig(((0.0, 0.0),), budget=100)


def test_config_rejects_budget_below_population():
    with pytest.raises(ConfigError):
        DEConfig(box(5), budget=49)


def test_default_population_size():
    assert DEConfig(box(5), budget=1000).population_size == 50
    assert DEConfig(box(23), budget=1000).population_size == 100


def test_init_within_bounds_and_seeded():
    cfg = DEConfig(box(5), budget=100, pop_size=10)
    a = de_init(cfg, 5, np.random.default_rng(4))
    b = de_init(cfg, 5, np.random.default_rng(4))
    assert a.individuals.shape == (10, 5)
    assert np.all(np.abs(a.individuals) <= 5)
    assert np.array_equal(a.individuals, b.individuals)


def _pop(rows):
    X = np.array(rows, dtype=float)
    return Population(X, np.zeros(len(X)))


def test_trial_with_full_crossover_is_the_mutant():
    pop = _pop([[9, 9], [0, 0], [1, 1], [0, 0]])
    rng = np.random.default_rng(0)
    t = de_trial(pop, 0, 0.5, 1.0, rng)
    # a, b, c are a permutation of rows 1..3; check the DE/rand/1 form
    others = pop.individuals[1:]
    candidates = {tuple(a + 0.5 * (b - c)) for a in others for b in others for c in others}
    assert tuple(t) in candidates


def test_mutant_arithmetic():
    pop = _pop([[5, 5], [0, 0], [1, 1], [0, 0]])

    class Fixed:
        def choice(self, n, size, replace):
            return np.array([0, 1, 2])  # -> rows 1, 2, 3 after skipping i=0

        def random(self, k):
            return np.zeros(k)

        def integers(self, k):
            return 0

    assert de_trial(pop, 0, 0.5, 1.0, Fixed()).tolist() == [0.5, 0.5]


def test_zero_crossover_changes_one_coordinate(rng):
    pop = Population(rng.normal(size=(10, 6)), np.zeros(10))
    for i in range(10):
        t = de_trial(pop, i, 0.5, 0.0, rng)
        assert np.sum(t != pop.individuals[i]) == 1


def test_trial_clipped(rng):
    pop = Population(rng.uniform(-1, 1, (8, 3)), np.zeros(8))
    for i in range(8):
        t = de_trial(pop, i, 2.0, 1.0, rng, np.full(3, -1.0), np.full(3, 1.0))
        assert np.all(np.abs(t) <= 1.0)


def test_trial_needs_four_members():
    with pytest.raises(ConfigError):
        de_trial(_pop([[0], [1], [2]]), 0, 0.5, 0.9, np.random.default_rng(0))


def test_constant_objective_keeps_values(rng):
    cfg = DEConfig(box(3), budget=1000, pop_size=10)
    pop = de_init(cfg, 3, rng, lambda x: 1.0)
    for _ in range(5):
        pop = de_step(pop, lambda x: 1.0, cfg, rng)
    assert np.all(pop.values == 1.0)


def test_elitism_over_steps(rng):
    cfg = DEConfig(box(4), budget=10**6, pop_size=20)
    pop = de_init(cfg, 4, rng, sphere)
    best = pop.values.min()
    for _ in range(100):
        pop = de_step(pop, sphere, cfg, rng)
        assert pop.values.min() <= best
        best = pop.values.min()
        assert np.allclose(pop.values, [sphere(x) for x in pop.individuals])


def test_sphere_run_converges():
    res = de_run(sphere, DEConfig(box(5), budget=5000, seed=1), 5)
    assert res.value < 1e-6
    # plain random search with the same budget is far worse
    rs = np.random.default_rng(1).uniform(-5, 5, (5000, 5))
    assert res.value < min(sphere(x) for x in rs) * 1e-3


def test_budget_exactly_population():
    cfg = DEConfig(box(2), budget=20, seed=0)
    res = de_run(sphere, cfg, 2)
    assert res.n_calls == 20
    assert res.value == min(res.population.values)


@given(st.integers(20, 700), st.integers(0, 1000))
def test_budget_accounting_exact(budget, seed):
    calls = []

    def f(x):
        calls.append(1)
        return sphere(x)

    res = de_run(f, DEConfig(box(2), budget=budget, seed=seed), 2)
    assert len(calls) == res.n_calls == budget


def test_same_seed_same_log():
    a = de_run(sphere, DEConfig(box(3), budget=900, seed=3), 3)
    b = de_run(sphere, DEConfig(box(3), budget=900, seed=3), 3)
    assert a.log.rows() == b.log.rows()


def test_log_invariants():
    log = de_run(sphere, DEConfig(box(3), budget=900, seed=3), 3).log
    assert np.all(np.diff(log.counts) > 0)
    assert np.all(np.diff(log.values) <= 0)
    assert log.counts[-1] == 900


def test_log_csv_roundtrip(tmp_path):
    log = de_run(sphere, DEConfig(box(3), budget=600, seed=2), 3).log
    log.to_csv(tmp_path / "c.csv")
    back = ConvergenceLog.from_csv(tmp_path / "c.csv")
    assert back.rows() == log.rows()
    assert open(tmp_path / "c.csv").readline().strip() == "true_evals,best_value"


def test_meta_model_log_counts_true_evaluations_only():
    k = 3
    tracker = TrueEvalTracker(sphere)
    mm = MetaModel(tracker, k, LearnerSpec("KNN"), LearnerSpec("KNN"),
                   MetaModelConfig(T1=0, T2=60, I1=0, I2=30, r=0.8))
    res = de_run(mm, DEConfig(box(k), budget=4000, seed=5), k, tracker=tracker)
    assert res.n_calls == 4000 == mm.n_evals
    assert res.n_true == mm.n_evals_f == tracker.count
    assert res.log.counts[-1] == tracker.count
    # the surrogate did substitute a large share of the calls
    assert res.n_true < 0.5 * res.n_calls
    assert res.value == min(r.value for r in mm.history.true_records())


def test_true_budget_stops_run():
    k = 3
    tracker = TrueEvalTracker(sphere)
    mm = MetaModel(tracker, k, LearnerSpec("KNN"), LearnerSpec("KNN"),
                   MetaModelConfig(T1=0, T2=60, I1=0, I2=30, r=0.8))
    res = de_run(mm, DEConfig(box(k), budget=10**6, seed=5, true_budget=500), k, tracker=tracker)
    assert res.n_true == 500
