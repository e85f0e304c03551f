"""epsilon-SVR with an RBF kernel, trained by SMO on the dual.

The dual is written in the 2n-variable form used by LIBSVM: variables
``a[:n]`` are the alpha_i with sign +1 and ``a[n:]`` the alpha*_i with sign
-1. Working pairs are chosen with second-order information (Fan, Chen and Lin
2005).
"""

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .base import Dataset, RegressionModel, Standardizer

SVM_DEFAULTS = {"C": 1.0, "epsilon": 1e-3, "gamma": None, "tol": 1e-3, "max_iter": None}

_TAU = 1e-12


@njit(cache=True)
def _smo(K, y, C, eps, tol, max_iter):
    n = y.shape[0]
    m = 2 * n
    sign = np.empty(m)
    p = np.empty(m)
    for t in range(n):
        sign[t] = 1.0
        sign[n + t] = -1.0
        p[t] = eps - y[t]
        p[n + t] = eps + y[t]
    a = np.zeros(m)
    G = p.copy()
    it = 0
    while it < max_iter:
        # select i: maximal violating index in I_up
        gmax = -np.inf
        i = -1
        for t in range(m):
            if sign[t] > 0:
                if a[t] < C and -G[t] >= gmax:
                    gmax = -G[t]
                    i = t
            else:
                if a[t] > 0 and G[t] >= gmax:
                    gmax = G[t]
                    i = t
        if i < 0:
            break
        ii = i % n
        gmax2 = -np.inf
        j = -1
        best = np.inf
        for t in range(m):
            tt = t % n
            if sign[t] > 0:
                if a[t] > 0:
                    diff = gmax + G[t]
                    if G[t] >= gmax2:
                        gmax2 = G[t]
                    if diff > 0:
                        quad = K[ii, ii] + K[tt, tt] - 2.0 * K[ii, tt]
                        if quad <= 0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= best:
                            best = obj
                            j = t
            else:
                if a[t] < C:
                    diff = gmax - G[t]
                    if -G[t] >= gmax2:
                        gmax2 = -G[t]
                    if diff > 0:
                        quad = K[ii, ii] + K[tt, tt] - 2.0 * K[ii, tt]
                        if quad <= 0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= best:
                            best = obj
                            j = t
        if gmax + gmax2 < tol or j < 0:
            break
        jj = j % n
        q_ij = sign[i] * sign[j] * K[ii, jj]
        old_i = a[i]
        old_j = a[j]
        if sign[i] != sign[j]:
            quad = K[ii, ii] + K[jj, jj] + 2.0 * q_ij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            else:
                if a[j] > C:
                    a[j] = C
                    a[i] = C + diff
        else:
            quad = K[ii, ii] + K[jj, jj] - 2.0 * q_ij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = total
        di = a[i] - old_i
        dj = a[j] - old_j
        for t in range(m):
            tt = t % n
            G[t] += sign[t] * (sign[i] * K[tt, ii] * di + sign[j] * K[tt, jj] * dj)
        it += 1

    # offset from free variables, else midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    acc = 0.0
    n_free = 0
    for t in range(m):
        yg = sign[t] * G[t]
        if a[t] >= C:
            if sign[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif a[t] <= 0:
            if sign[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            acc += yg
    if n_free > 0:
        rho = acc / n_free
    else:
        rho = 0.5 * (ub + lb)
    coef = a[:n] - a[n:]
    return coef, rho, it


class SVRModel(RegressionModel):
    family = "SVM"

    def __init__(self, k, scaler, Z, coef, rho, gamma, n_iter):
        super().__init__(k)
        self.scaler = scaler
        self.Z = Z
        self.coef = coef
        self.rho = rho
        self.gamma = gamma
        self.n_iter = n_iter

    def _predict(self, X):
        Kx = np.exp(-self.gamma * cdist(self.scaler(X), self.Z, "sqeuclidean"))
        return Kx @ self.coef - self.rho


def fit_svm(data: Dataset, params: dict, seed: int) -> SVRModel:
    p = {**SVM_DEFAULTS, **params}
    X, y = data.inputs, data.targets
    n, k = X.shape
    gamma = p["gamma"] if p["gamma"] is not None else 1.0 / k
    max_iter = p["max_iter"] if p["max_iter"] is not None else max(10_000_000, 100 * n)
    scaler = Standardizer(X)
    Z = scaler(X)
    K = np.exp(-gamma * cdist(Z, Z, "sqeuclidean"))
    coef, rho, n_iter = _smo(K, y, float(p["C"]), float(p["epsilon"]), float(p["tol"]), int(max_iter))
    keep = coef != 0.0
    if not keep.any():
        keep[:1] = True
    return SVRModel(k, scaler, Z[keep], coef[keep], float(rho), gamma, int(n_iter))
