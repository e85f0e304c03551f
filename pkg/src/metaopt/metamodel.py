"""The meta model: an objective wrapper that learns when to trust a surrogate.

Each call either evaluates the true objective or answers with the surrogate's
prediction. The choice is made by a second learned model (the relevator) that
predicts how relevant the point is to the optimizer, compared against a
threshold that is steered towards a target substitution rate.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .history import EvaluationHistory, EvaluationRecord, filter_training_records
from .learners import Dataset, LearnerSpec, RegressionModel, fit


class ObjectiveError(RuntimeError):
    """The true objective returned a non-finite value."""


@dataclass(frozen=True)
class MetaModelConfig:
    T1: int = 0
    T2: int = 100
    I1: int = 0
    I2: int = 50
    r: float = 0.8
    window: int = 100
    theta_step: float = 0.002
    theta0: float = 0.5

    def __post_init__(self):
        for name in ("T1", "T2", "I1", "I2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if self.window < 1:
            raise ValueError("window must be positive")
        if self.theta_step <= 0:
            raise ValueError("theta_step must be positive")
        if not 0.0 <= self.theta0 <= 1.0:
            raise ValueError("theta0 must lie in [0, 1]")

    def train_size(self, k: int) -> int:
        return k * self.T1 + self.T2

    def rebuild_interval(self, k: int) -> int:
        return k * self.I1 + self.I2

    def check(self, k: int) -> None:
        if self.train_size(k) < 1 or self.rebuild_interval(k) < 1:
            raise ValueError(
                f"k*T1+T2 and k*I1+I2 must both be >= 1 (k={k}, config={self})"
            )


def relevance(fx: float, fvals: Sequence[float]) -> float:
    """Relevance of a value relative to recently seen objective values.

    1 at or below the minimum, 1/2 at the mean, tending to 0 far above it.
    When all values are equal (mean == min) the result is 1 for fx <= min
    and 0 otherwise.
    """
    f = np.asarray(fvals, dtype=float)
    if f.size == 0:
        raise ValueError("relevance needs at least one reference value")
    lo = float(f.min())
    avg = float(f.mean())
    if fx < lo:
        return 1.0
    if avg <= lo:
        return 1.0 if fx <= lo else 0.0
    return 1.0 / (1.0 + (fx - lo) / (avg - lo))


def _relevance_vector(f: np.ndarray) -> np.ndarray:
    lo = f.min()
    avg = f.mean()
    if avg <= lo:
        return np.where(f <= lo, 1.0, 0.0)
    return 1.0 / (1.0 + (f - lo) / (avg - lo))


def decide(rel_estimate: float, theta: float) -> int:
    return 1 if rel_estimate > theta else 0


def _shift_theta(theta, surrogate_rate, r, step):
    if surrogate_rate < r:
        theta = theta + step
    elif surrogate_rate > r:
        theta = theta - step
    return min(1.0, max(0.0, theta))


def update_threshold(theta: float, recent_decisions: Sequence[int], r: float, theta_step: float) -> float:
    """One step of the substitution-rate controller.

    Too few surrogate answers in the window raise the threshold (so more
    points fall at or below it), too many lower it.
    """
    if len(recent_decisions) == 0:
        return theta
    rate = sum(1 for d in recent_decisions if d == 0) / len(recent_decisions)
    return _shift_theta(theta, rate, r, theta_step)


def should_rebuild(n_evals_f: int, k: int, config: MetaModelConfig) -> bool:
    warm = config.train_size(k)
    if n_evals_f < warm:
        return False
    return (n_evals_f - warm) % config.rebuild_interval(k) == 0


def build_surrogate_dataset(records: Sequence[EvaluationRecord], k: Optional[int] = None) -> Dataset:
    if not records:
        return Dataset(np.empty((0, k or 0)), np.empty(0))
    return Dataset(np.vstack([rec.x for rec in records]), np.array([rec.value for rec in records]))


def build_relevator_dataset(records: Sequence[EvaluationRecord], k: Optional[int] = None) -> Dataset:
    if not records:
        return Dataset(np.empty((0, k or 0)), np.empty(0))
    f = np.array([rec.value for rec in records])
    return Dataset(np.vstack([rec.x for rec in records]), _relevance_vector(f))


@dataclass
class MetaModel:
    """Callable replacement for an objective function.

    >>> mm = MetaModel(objective, k=5, surrogate_spec=LearnerSpec("TREE"),
    ...                relevator_spec=LearnerSpec("RF"))
    >>> value = mm(x)
    """

    objective: Callable[[np.ndarray], float]
    k: int
    surrogate_spec: LearnerSpec
    relevator_spec: LearnerSpec
    config: MetaModelConfig = field(default_factory=MetaModelConfig)
    surrogate_model: Optional[RegressionModel] = None
    relevator_model: Optional[RegressionModel] = None
    history: Optional[EvaluationHistory] = None
    on_fit: Optional[Callable[[int], None]] = None

    def __post_init__(self):
        self.config.check(self.k)
        if self.history is None:
            self.history = EvaluationHistory(self.k)
        self.theta = self.config.theta0
        self.n_fits = 0
        self._fitted_at = -1
        self._window = deque(maxlen=self.config.window)
        self._window_zeros = 0

    @property
    def n_evals(self) -> int:
        return self.history.n_evals

    @property
    def n_evals_f(self) -> int:
        return self.history.n_evals_f

    def _rebuild(self) -> None:
        records = filter_training_records(self.history, self.config.train_size(self.k))
        seed_offset = self.n_fits
        self.surrogate_model = fit(
            self.surrogate_spec.with_seed(self.surrogate_spec.seed + seed_offset),
            build_surrogate_dataset(records),
        )
        self.relevator_model = fit(
            self.relevator_spec.with_seed(self.relevator_spec.seed + seed_offset),
            build_relevator_dataset(records),
        )
        self.n_fits += 1
        self._fitted_at = self.n_evals_f
        if self.on_fit is not None:
            self.on_fit(self.n_evals_f)

    def _push_decision(self, decision: int) -> None:
        if len(self._window) == self._window.maxlen and self._window[0] == 0:
            self._window_zeros -= 1
        self._window.append(decision)
        if decision == 0:
            self._window_zeros += 1

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.k:
            raise ValueError(f"expected a vector of length {self.k}, got {x.shape[0]}")
        cfg = self.config
        n_f = self.n_evals_f
        # the guard fires once per crossing, not on every surrogate call made
        # while the true-eval counter sits on a rebuild point
        if should_rebuild(n_f, self.k, cfg) and self._fitted_at != n_f:
            self._rebuild()
        if n_f < cfg.train_size(self.k):
            decision = 1
        else:
            rate = self._window_zeros / len(self._window) if self._window else 0.0
            if self._window:
                self.theta = _shift_theta(self.theta, rate, cfg.r, cfg.theta_step)
            rel = min(1.0, max(0.0, self.relevator_model.predict(x)))
            decision = decide(rel, self.theta)
        if decision == 1:
            value = float(self.objective(x))
            if not math.isfinite(value):
                raise ObjectiveError(f"objective returned {value!r} at x={x.tolist()}")
        else:
            value = float(self.surrogate_model.predict(x))
        self.history.record(x, value, decision)
        self._push_decision(decision)
        return value

    __call__ = evaluate


def evaluate(mm: MetaModel, x) -> float:
    return mm.evaluate(x)
