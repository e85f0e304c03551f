"""Rank-based tests for comparing optimizers: Friedman, Nemenyi, Page.

Score matrices are ``(N, g)``: one row per problem (or run), one column per
method. Lower scores are better and get lower ranks; ties share the average
rank.

Small instances get exact permutation p-values (each row's ranks permuted
independently under the null); larger ones fall back to the chi-square
(Friedman) or normal (Page) approximation.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np
from scipy import stats as _st

# Studentized range statistic divided by sqrt(2), infinite degrees of
# freedom, for g = 2..10 groups (the usual two-tailed Nemenyi table).
Q_ALPHA = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}

# work limit for the exact Friedman recursion (states x row permutations)
_EXACT_WORK = 2_000_000
_PAGE_EXACT_MAX_G = 8


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    exact: bool

    def __iter__(self):
        # unpacks as (statistic, p_value)
        return iter((self.statistic, self.p_value))


def _as_matrix(scores, min_rows=2, min_cols=2) -> np.ndarray:
    m = np.asarray(scores, dtype=float)
    if m.ndim != 2:
        raise ValueError("scores must be a 2-D matrix (rows x groups)")
    if m.shape[0] < min_rows or m.shape[1] < min_cols:
        raise ValueError(f"need at least {min_rows} rows and {min_cols} columns, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("scores must be finite")
    return m


def rank_rows(scores) -> np.ndarray:
    """Per-row ranks 1..g, average ranks for ties."""
    m = np.asarray(scores, dtype=float)
    return _st.rankdata(m, axis=1)


def average_rank_summary(scores) -> np.ndarray:
    """Mean rank of every column (lower is better)."""
    m = _as_matrix(scores, min_rows=1)
    return rank_rows(m).mean(axis=0)


def _distinct_perms(row) -> list:
    return sorted(set(permutations(row)))


def _friedman_exact(doubled: np.ndarray, observed_ss: int):
    """P(sum_j R_j^2 >= observed) over independent row permutations.

    Ranks are doubled so ties (halves) stay integral. Returns None when the
    recursion would exceed the work limit.
    """
    dist = {tuple([0] * doubled.shape[1]): 1}
    for row in doubled:
        perms = _distinct_perms(tuple(int(v) for v in row))
        if len(dist) * len(perms) > _EXACT_WORK:
            return None
        nxt = defaultdict(int)
        for sums, count in dist.items():
            for p in perms:
                nxt[tuple(a + b for a, b in zip(sums, p))] += count
        dist = nxt
    total = sum(dist.values())
    hit = sum(c for sums, c in dist.items() if sum(s * s for s in sums) >= observed_ss)
    return hit / total


def friedman_test(scores, exact: bool | None = None) -> TestResult:
    """Friedman rank-sum test (tie-corrected).

    Parameters
    ----------
    scores : array (N, g)
    exact : bool, optional
        Force (True) or forbid (False) the exact permutation p-value. By
        default it is used whenever the recursion is small enough.

    Returns
    -------
    TestResult
        statistic and p-value; all-equal rows give (0, 1).
    """
    m = _as_matrix(scores)
    n, g = m.shape
    ranks = rank_rows(m)
    r_sum = ranks.sum(axis=0)
    denom = float(np.sum(ranks**2)) - n * g * (g + 1) ** 2 / 4.0
    if denom <= 1e-12:
        return TestResult(0.0, 1.0, True)
    stat = (g - 1) * float(np.sum((r_sum - n * (g + 1) / 2.0) ** 2)) / denom
    if exact is not False:
        doubled = np.rint(2 * ranks).astype(np.int64)
        observed = int(np.sum(doubled.sum(axis=0) ** 2))
        p = _friedman_exact(doubled, observed)
        if p is not None:
            return TestResult(stat, float(min(1.0, p)), True)
        if exact:
            raise ValueError(f"exact Friedman p-value is too expensive for shape {m.shape}")
    return TestResult(stat, float(_st.chi2.sf(stat, g - 1)), False)


def nemenyi_cd(g: int, n: int, alpha: float = 0.05) -> float:
    """Critical difference between average ranks of g methods on n problems."""
    if alpha not in Q_ALPHA:
        raise ValueError(f"alpha must be one of {sorted(Q_ALPHA)}")
    if not 2 <= g <= 10:
        raise ValueError("g must lie in [2, 10]")
    if n < 1:
        raise ValueError("n must be positive")
    q = Q_ALPHA[alpha][g - 2]
    return q * math.sqrt(g * (g + 1) / (6.0 * n))


def _row_l_distribution(doubled_row) -> dict:
    weights = np.arange(1, len(doubled_row) + 1)
    dist = defaultdict(int)
    for p in permutations(doubled_row):
        dist[int(np.dot(weights, p))] += 1
    return dist


def page_trend_test(diffs, exact: bool | None = None) -> TestResult:
    """Page's L test for an increasing trend along the columns.

    Each row is ranked across its columns (ascending values get ascending
    ranks) and L = sum_j j * R_j. The p-value is P(L >= observed) under
    independent row permutations: exact for up to 8 columns, otherwise the
    normal approximation with tie-aware variance.
    """
    m = _as_matrix(diffs, min_rows=1, min_cols=3)
    n, g = m.shape
    ranks = rank_rows(m)
    j = np.arange(1, g + 1)
    L = float(np.sum(ranks.sum(axis=0) * j))
    use_exact = g <= _PAGE_EXACT_MAX_G if exact is None else exact
    if use_exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        total = {0: 1}
        for row in doubled:
            row_dist = _row_l_distribution(tuple(int(v) for v in row))
            nxt = defaultdict(int)
            for a, ca in total.items():
                for b, cb in row_dist.items():
                    nxt[a + b] += ca * cb
            total = nxt
        observed = int(round(2 * L))
        hit = sum(c for v, c in total.items() if v >= observed)
        return TestResult(L, hit / sum(total.values()), True)
    mean = n * g * (g + 1) ** 2 / 4.0
    jc = j - j.mean()
    rc = ranks - ranks.mean(axis=1, keepdims=True)
    var = float(np.sum(jc**2) * np.sum(rc**2) / (g - 1))
    if var <= 0:
        return TestResult(L, 1.0, False)
    # continuity-free upper tail
    z = (L - mean) / math.sqrt(var)
    return TestResult(L, float(_st.norm.sf(z)), False)


# -- convergence curves at common cut points --------------------------------

def cut_points(curves, n: int = 20) -> np.ndarray:
    """``n`` counts spaced uniformly in log between the first and last counts
    that every curve covers."""
    if n < 3:
        raise ValueError("need at least 3 cut points")
    start = max(c.counts[0] for c in curves)
    stop = min(c.counts[-1] for c in curves)
    if stop < start:
        raise ValueError("curves share no common evaluation range")
    if stop == start:
        return np.full(n, float(start))
    return np.exp(np.linspace(math.log(start), math.log(stop), n))


def curve_at(log, cuts) -> np.ndarray:
    """Best-so-far value at the largest recorded count <= each cut."""
    counts = np.asarray(log.counts, dtype=float)
    values = np.asarray(log.values, dtype=float)
    idx = np.searchsorted(counts, np.asarray(cuts) * (1 + 1e-12), side="right") - 1
    if np.any(idx < 0):
        raise ValueError("cut point before the first recorded count")
    return values[idx]


def min_over_restarts(logs, cuts) -> np.ndarray:
    """Pointwise minimum of several runs' curves, sampled at ``cuts``."""
    return np.min([curve_at(log, cuts) for log in logs], axis=0)


def page_matrix(baseline_runs: Sequence[Sequence], meta_runs: Sequence[Sequence], n_cuts: int = 20) -> np.ndarray:
    """Rows of (baseline - meta model) best-so-far differences, one per problem.

    Each argument is a list over problems of lists of restart logs.
    """
    rows = []
    for base_logs, mm_logs in zip(baseline_runs, meta_runs):
        cuts = cut_points(list(base_logs) + list(mm_logs), n_cuts)
        rows.append(min_over_restarts(base_logs, cuts) - min_over_restarts(mm_logs, cuts))
    return np.asarray(rows)
