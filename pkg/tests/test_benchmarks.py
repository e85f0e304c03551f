import numpy as np
import pytest
from hypothesis import given, strategies as st

from metaopt.benchmarks import (
    REGISTRY,
    SUITE_IDS,
    BenchmarkFunction,
    eval_benchmark,
    evals_to_threshold,
    make_suite,
    overall_pi,
    pi_f,
    speedup_on_logs,
    transposed_curve,
)
from metaopt.optimizer import ConvergenceLog


def test_suite_shape():
    assert len(SUITE_IDS) == 15
    classes = [REGISTRY[f].cls for f in SUITE_IDS]
    assert {c: classes.count(c) for c in set(classes)} == {"hc": 5, "ms": 5, "mw": 5}
    assert len(make_suite(SUITE_IDS, [5, 10, 20])) == 45


@pytest.mark.parametrize("fid", SUITE_IDS + ["sphere"])
@pytest.mark.parametrize("k", [5, 10, 20])
def test_optimum_at_shift(fid, k):
    fn = BenchmarkFunction(fid, k)
    assert eval_benchmark(fn, fn.shift) == fn.optimum
    pts = np.random.default_rng(7).uniform(-5, 5, (1000, k))
    vals = np.array([fn(x) for x in pts])
    assert np.all(vals >= fn.optimum)
    assert np.all(np.isfinite(vals))


def test_instances_are_reproducible_and_distinct():
    a, b = BenchmarkFunction("rastrigin", 5), BenchmarkFunction("rastrigin", 5)
    c = BenchmarkFunction("rastrigin", 5, instance=2)
    x = np.linspace(-1, 1, 5)
    assert a(x) == b(x)
    assert not np.array_equal(a.shift, c.shift)


def test_sphere_unit_offset():
    fn = BenchmarkFunction("sphere", 5)
    e1 = np.eye(5)[0]
    assert fn(fn.shift + e1) - fn.optimum == pytest.approx(1.0)


def test_rastrigin_lattice_points_above_optimum():
    fn = BenchmarkFunction("rastrigin", 5)
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.integers(-2, 3, 5).astype(float)
        if not z.any():
            continue
        assert fn(fn.shift + z) > fn.optimum


def test_dimension_checked():
    with pytest.raises(ValueError):
        BenchmarkFunction("ellipsoid", 5)(np.zeros(4))


def test_unknown_function():
    with pytest.raises(KeyError):
        BenchmarkFunction("nope", 5)


def log_of(counts, values):
    return ConvergenceLog(list(counts), list(values))


def test_evals_to_threshold_examples():
    log = log_of((10, 20, 30), (5, 3, 1))
    assert evals_to_threshold(log, 3) == 20
    assert evals_to_threshold(log, 0.5) is None
    assert evals_to_threshold(log, 100) == 10
    assert transposed_curve(log, [5, 3, 1, 0]) == [10, 20, 30, None]


def test_pi_f_examples():
    assert pi_f(100, 100) == 0
    assert pi_f(23, 100) == pytest.approx(0.77)
    assert pi_f(150, 100) == 0
    assert pi_f(None, 100) == 0
    with pytest.raises(ValueError):
        pi_f(1, 0)


@given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(1, 10**6), st.integers(1, 50))
def test_pi_f_monotone_and_scale_free(m1, m2, n, c):
    lo, hi = min(m1, m2), max(m1, m2)
    assert pi_f(lo, n) >= pi_f(hi, n)
    assert pi_f(m1, n) == pytest.approx(pi_f(c * m1, c * n))
    assert 0 <= pi_f(m1, n) <= 1


def test_overall_pi_examples():
    assert overall_pi([0, 0, 0]).pi == 0
    r = overall_pi([1, 1])
    assert (r.mean_pi_f, r.success_share, r.pi) == (1, 1, 2)
    r = overall_pi([0.5, 0])
    assert (r.mean_pi_f, r.success_share, r.pi) == (0.25, 0.5, 0.75)
    with pytest.raises(ValueError):
        overall_pi([])


def test_speedup_on_logs():
    base = log_of((10, 50, 100), (9.0, 4.0, 2.0))
    fast = log_of((10, 40), (8.0, 1.5))
    slow = log_of((10, 200), (8.0, 3.0))
    assert speedup_on_logs(base, fast) == pytest.approx(0.6)
    assert speedup_on_logs(base, slow) == 0.0
