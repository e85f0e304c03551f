"""DE/rand/1/bin, the base optimizer the meta model is coupled with."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    pass


class BudgetExhausted(Exception):
    """Raised internally when the objective-call budget runs out mid-generation."""


@dataclass(frozen=True)
class DEConfig:
    bounds: tuple  # ((low, high), ...) one pair per dimension
    budget: int
    pop_size: Optional[int] = None  # default 10*k capped at 100
    weight_f: float = 0.5
    crossover_cr: float = 0.9
    seed: int = 0
    true_budget: Optional[int] = None  # stop after this many true evaluations

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ConfigError("bounds must be a sequence of (low, high) pairs")
        if np.any(b[:, 0] >= b[:, 1]):
            raise ConfigError("every bound needs low < high")
        object.__setattr__(self, "bounds", tuple(map(tuple, b.tolist())))
        if not 0.0 < self.weight_f <= 2.0:
            raise ConfigError("weight_f must lie in (0, 2]")
        if not 0.0 <= self.crossover_cr <= 1.0:
            raise ConfigError("crossover_cr must lie in [0, 1]")
        if self.budget < self.population_size:
            raise ConfigError(
                f"budget {self.budget} is smaller than the population size {self.population_size}"
            )

    @property
    def k(self) -> int:
        return len(self.bounds)

    @property
    def population_size(self) -> int:
        if self.pop_size is not None:
            return int(self.pop_size)
        return min(10 * self.k, 100)

    @property
    def low(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def high(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])


@dataclass
class Population:
    individuals: np.ndarray  # (pop, k)
    values: np.ndarray       # (pop,)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.values))

    @property
    def best(self) -> tuple[np.ndarray, float]:
        i = self.best_index
        return self.individuals[i].copy(), float(self.values[i])


@dataclass
class ConvergenceLog:
    """Best-so-far true objective value against the true-evaluation count.

    Rows are added on improvement; ``close`` appends the final count so the
    log spans the whole run.
    """

    counts: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def observe(self, count: int, value: float) -> None:
        if not self.values or value < self.values[-1]:
            if self.counts and count == self.counts[-1]:
                self.values[-1] = value
            else:
                self.counts.append(count)
                self.values.append(value)

    def close(self, count: int) -> None:
        if self.counts and count > self.counts[-1]:
            self.counts.append(count)
            self.values.append(self.values[-1])

    @property
    def final_best(self) -> float:
        return self.values[-1] if self.values else math.inf

    def rows(self):
        return list(zip(self.counts, self.values))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("true_evals,best_value\n")
            for c, v in zip(self.counts, self.values):
                fh.write(f"{int(c)},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "ConvergenceLog":
        log = cls()
        with open(path) as fh:
            next(fh)
            for line in fh:
                c, v = line.strip().split(",")
                log.counts.append(int(c))
                log.values.append(float(v))
        return log


class TrueEvalTracker:
    """Wraps the true objective, counting calls and logging the best value.

    Hand the tracker (not the bare function) to the meta model so the
    convergence log advances only on true evaluations.
    """

    def __init__(self, func: Callable[[np.ndarray], float]):
        self.func = func
        self.count = 0
        self.best_x: Optional[np.ndarray] = None
        self.log = ConvergenceLog()

    def __call__(self, x) -> float:
        value = float(self.func(x))
        self.count += 1
        if math.isfinite(value) and (not self.log.values or value < self.log.values[-1]):
            self.best_x = np.array(x, dtype=float)
        if math.isfinite(value):
            self.log.observe(self.count, value)
        return value


def de_init(config: DEConfig, k: int, rng: np.random.Generator, objective=None) -> Population:
    """Uniform random population; evaluated if ``objective`` is given."""
    if config.k != k:
        raise ConfigError(f"bounds describe {config.k} dimensions, problem has {k}")
    n = config.population_size
    low, high = config.low, config.high
    X = low + rng.random((n, k)) * (high - low)
    if objective is None:
        values = np.full(n, np.inf)
    else:
        values = np.array([objective(x) for x in X], dtype=float)
    return Population(X, values)


def de_trial(pop: Population, i: int, weight_f: float, crossover_cr: float,
             rng: np.random.Generator, low=None, high=None) -> np.ndarray:
    n, k = pop.individuals.shape
    if n < 4:
        raise ConfigError("DE/rand/1 needs a population of at least 4")
    # three distinct indices, all different from i
    choices = rng.choice(n - 1, size=3, replace=False)
    choices[choices >= i] += 1
    a, b, c = pop.individuals[choices]
    mutant = a + weight_f * (b - c)
    mask = rng.random(k) < crossover_cr
    mask[rng.integers(k)] = True
    trial = np.where(mask, mutant, pop.individuals[i])
    if low is not None:
        trial = np.clip(trial, low, high)
    return trial


def de_step(pop: Population, objective, config: DEConfig, rng: np.random.Generator,
            should_stop: Optional[Callable[[], bool]] = None) -> Population:
    """One generation with greedy one-to-one selection (ties go to the trial).

    Trials are generated against the population as it stands, so an
    individual replaced earlier in the generation can already act as a donor.
    Raises ``BudgetExhausted`` if ``should_stop`` fires mid-generation; the
    population is left consistent.
    """
    low, high = config.low, config.high
    for i in range(pop.individuals.shape[0]):
        if should_stop is not None and should_stop():
            raise BudgetExhausted
        trial = de_trial(pop, i, config.weight_f, config.crossover_cr, rng, low, high)
        value = float(objective(trial))
        if value <= pop.values[i]:
            pop.individuals[i] = trial
            pop.values[i] = value
    return pop


@dataclass
class DEResult:
    x: np.ndarray
    value: float
    log: ConvergenceLog
    n_calls: int
    n_true: int
    population: Population


def de_run(objective, config: DEConfig, k: int, tracker: Optional[TrueEvalTracker] = None) -> DEResult:
    """Run DE until the call budget (or the true-evaluation budget) is spent.

    ``objective`` is what DE sees: the raw function or a meta model. When
    ``tracker`` is given it must be the true objective inside ``objective``;
    the log and the reported best then refer to true evaluations only.
    """
    rng = np.random.default_rng(config.seed)
    if tracker is None:
        tracker = TrueEvalTracker(objective)
        inner = tracker
    else:
        inner = objective
    calls = 0

    def counted(x):
        nonlocal calls
        calls += 1
        return inner(x)

    def should_stop():
        if calls >= config.budget:
            return True
        return config.true_budget is not None and tracker.count >= config.true_budget

    pop = de_init(config, k, rng, counted)
    try:
        while not should_stop():
            de_step(pop, counted, config, rng, should_stop)
    except BudgetExhausted:
        pass
    tracker.log.close(tracker.count)
    if tracker.best_x is None:
        best_x, best_v = pop.best
    else:
        best_x, best_v = tracker.best_x, tracker.log.final_best
    return DEResult(best_x, best_v, tracker.log, calls, tracker.count, pop)
