import numpy as np
from scipy.spatial.distance import cdist

from .base import Dataset, RegressionModel, Standardizer

KNN_DEFAULTS = {"n_neighbors": 5}


class KNNModel(RegressionModel):
    family = "KNN"

    def __init__(self, k, scaler, Z, y, n_neighbors):
        super().__init__(k)
        self.scaler = scaler
        self.Z = Z
        self.y = y
        self.n_neighbors = min(n_neighbors, len(y))

    def neighbors(self, x) -> np.ndarray:
        """Training indices of the nearest neighbours of one point.

        Ties in distance go to the lower training index (stable sort).
        """
        z = self.scaler(np.asarray(x, dtype=float).reshape(1, -1))[0]
        d2 = ((self.Z - z) ** 2).sum(axis=1)
        return np.argsort(d2, kind="stable")[: self.n_neighbors]

    def _predict(self, X):
        d2 = cdist(self.scaler(X), self.Z, "sqeuclidean")
        idx = np.argsort(d2, axis=1, kind="stable")[:, : self.n_neighbors]
        return self.y[idx].mean(axis=1)


def fit_knn(data: Dataset, params: dict, seed: int) -> KNNModel:
    p = {**KNN_DEFAULTS, **params}
    n_neighbors = int(p["n_neighbors"])
    if n_neighbors < 1:
        raise ValueError("n_neighbors must be >= 1")
    scaler = Standardizer(data.inputs)
    return KNNModel(data.k, scaler, scaler(data.inputs), data.targets.copy(), n_neighbors)
