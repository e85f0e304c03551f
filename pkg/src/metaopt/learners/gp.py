"""Gaussian-process regression with a squared-exponential covariance."""

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from .base import ConstantModel, Dataset, RegressionModel, Standardizer

GP_DEFAULTS = {"noise": 0.01, "length_scale": None}


def sq_exp_kernel(x1, x2, length_scale: float) -> float:
    """exp(-|x1 - x2|^2 / (2 l^2))."""
    if length_scale <= 0:
        raise ValueError("length_scale must be positive")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise ValueError("kernel arguments must have equal dimensions")
    d2 = float(np.sum((x1 - x2) ** 2))
    return float(np.exp(-d2 / (2.0 * length_scale**2)))


def _gram(A, B, length_scale):
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * length_scale**2))


class GPModel(RegressionModel):
    family = "GP"

    def __init__(self, k, scaler, Z, weights, mean, signal_var, length_scale):
        super().__init__(k)
        self.scaler = scaler
        self.Z = Z
        self.weights = weights
        self.mean = mean
        self.signal_var = signal_var
        self.length_scale = length_scale

    def _predict(self, X):
        Ks = self.signal_var * _gram(self.scaler(X), self.Z, self.length_scale)
        return self.mean + Ks @ self.weights


def fit_gp(data: Dataset, params: dict, seed: int) -> RegressionModel:
    """Exact GP posterior mean.

    Hyperparameters are set by heuristics rather than marginal-likelihood
    optimisation: length scale = median pairwise distance of the standardized
    inputs, signal variance = target variance, noise variance = ``noise`` times
    the target variance.
    """
    p = {**GP_DEFAULTS, **params}
    X, y = data.inputs, data.targets
    mean = float(y.mean())
    signal_var = float(y.var())
    if signal_var <= 1e-300:
        return ConstantModel(data.k, mean)
    scaler = Standardizer(X)
    Z = scaler(X)
    ls = p["length_scale"]
    if ls is None:
        dists = pdist(Z) if len(Z) > 1 else np.array([])
        dists = dists[dists > 0]
        ls = float(np.median(dists)) if dists.size else 1.0
    K = signal_var * _gram(Z, Z, ls)
    K[np.diag_indices_from(K)] += p["noise"] * signal_var
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(K + jitter * np.eye(len(K)), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10, 1e-12 * signal_var)
    weights = cho_solve(factor, y - mean)
    return GPModel(data.k, scaler, Z, weights, mean, signal_var, ls)
