"""Append-only evaluation history kept by the meta model."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np


class DimensionMismatch(ValueError):
    """A query point does not have the history's dimension."""


@dataclass(frozen=True)
class EvaluationRecord:
    x: np.ndarray
    value: float
    decision: int  # 1 = true objective, 0 = surrogate


@dataclass
class EvaluationHistory:
    """Ordered record of every meta-model evaluation.

    Records are only ever appended. ``n_evals`` and ``n_evals_f`` are kept in
    step with the records so callers never have to rescan.
    """

    k: int
    records: list[EvaluationRecord] = field(default_factory=list)
    n_evals: int = 0
    n_evals_f: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"dimension must be positive, got {self.k}")
        # indices of decision=1 records, for O(size) filtration
        self._true_idx: list[int] = [
            i for i, rec in enumerate(self.records) if rec.decision == 1
        ]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EvaluationRecord]:
        return iter(self.records)

    def record(self, x, value: float, decision: int) -> "EvaluationHistory":
        x = np.array(x, dtype=float).ravel()
        if x.shape[0] != self.k:
            raise DimensionMismatch(
                f"expected a vector of length {self.k}, got {x.shape[0]}"
            )
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"refusing to record non-finite value {value!r}")
        if decision not in (0, 1):
            raise ValueError(f"decision must be 0 or 1, got {decision!r}")
        x.setflags(write=False)
        self.records.append(EvaluationRecord(x, value, int(decision)))
        self.n_evals += 1
        if decision == 1:
            self.n_evals_f += 1
            self._true_idx.append(len(self.records) - 1)
        return self

    def true_records(self) -> list[EvaluationRecord]:
        return [self.records[i] for i in self._true_idx]

    def recent_decisions(self, window: int) -> list[int]:
        return [rec.decision for rec in self.records[-window:]]

    def substitution_rate(self) -> float:
        if self.n_evals == 0:
            return 0.0
        return 1.0 - self.n_evals_f / self.n_evals


def record(history: EvaluationHistory, x, value: float, decision: int) -> EvaluationHistory:
    return history.record(x, value, decision)


def filter_training_records(history: EvaluationHistory, size: int) -> list[EvaluationRecord]:
    """Return the latest ``size`` true-objective records, oldest first."""
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    idx = history._true_idx[-size:]
    return [history.records[i] for i in idx]


def write_run_log(history: EvaluationHistory, path) -> None:
    """One CSV row per record.

    ``best_true_value`` is the lowest true-objective value seen up to and
    including the row; it is empty until the first true evaluation.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eval_index", "n_true_evals", "decision", "value", "best_true_value"])
        n_true = 0
        best = math.inf
        for i, rec in enumerate(history.records):
            if rec.decision == 1:
                n_true += 1
                best = min(best, rec.value)
            writer.writerow([
                i + 1,
                n_true,
                rec.decision,
                repr(rec.value),
                repr(best) if n_true else "",
            ])


def replay_counts(records: Sequence[EvaluationRecord]) -> tuple[int, int]:
    return len(records), sum(rec.decision for rec in records)
