from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

FAMILIES = ("LINEAR", "TREE", "KNN", "GP", "SVM", "RF")


class FitError(ValueError):
    """Raised when a learner cannot be fitted to the data it was given."""


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray   # (n, k)
    targets: np.ndarray  # (n,)

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=float).ravel()
        if inputs.ndim == 1:
            inputs = inputs.reshape(len(targets), -1) if len(targets) else inputs.reshape(0, 0)
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError(
                f"inputs have {inputs.shape[0]} rows but targets have {targets.shape[0]}"
            )
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def k(self) -> int:
        return self.inputs.shape[1] if self.inputs.ndim == 2 else 0


@dataclass(frozen=True)
class LearnerSpec:
    """Recipe for one of the six learner families.

    ``params`` overrides the family defaults (see each family module).
    """

    family: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        fam = self.family.upper()
        if fam not in FAMILIES:
            raise ValueError(f"unknown learner family {self.family!r}; choose from {FAMILIES}")
        object.__setattr__(self, "family", fam)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return LearnerSpec(self.family, dict(self.params), int(seed))


class RegressionModel:
    """A fitted predictor. Subclasses implement ``_predict(X)`` on 2-D input."""

    family: str = ""

    def __init__(self, k: int):
        self.k = int(k)

    def predict(self, x):
        """Predict one vector (returns float) or a batch of rows (returns array)."""
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 1:
            if arr.shape[0] != self.k:
                raise ValueError(f"model expects dimension {self.k}, got {arr.shape[0]}")
            return float(self._predict(arr.reshape(1, -1))[0])
        if arr.ndim != 2 or arr.shape[1] != self.k:
            raise ValueError(f"model expects rows of dimension {self.k}, got shape {arr.shape}")
        return self._predict(arr)

    def _predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Standardizer:
    """Per-feature centering and scaling; zero-variance features get scale 1."""

    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale = np.where(std > 0, std, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


class ConstantModel(RegressionModel):
    family = "CONST"

    def __init__(self, k: int, value: float):
        super().__init__(k)
        self.value = float(value)

    def _predict(self, X):
        return np.full(X.shape[0], self.value)
