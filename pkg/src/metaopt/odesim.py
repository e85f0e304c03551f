"""Fixed-step RK4 simulation of the three biological model systems and the
parameter-estimation objectives built on top of it.

Derivative functions share the signature ``deriv(y, params, u)`` where ``u``
holds the exogenous inputs in force at the current time. The model
derivatives are numba-compiled so a whole trajectory is integrated without
returning to Python; plain Python callables are accepted too and take a
slower pure-Python path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit
from numba.core.registry import CPUDispatcher

PENALTY = 1e12
SSYSTEM_EPS = 1e-12


class IntegrationError(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


@njit(cache=True)
def repressilator_deriv(y, params, u):
    """Repressilator: mRNAs m1..m3 then proteins p1..p3.

    params = (alpha0, alpha, n, beta, d). Protein levels are clamped at zero
    before the Hill term so a non-integer ``n`` never meets a negative base.
    """
    a0 = params[0]
    a = params[1]
    n = params[2]
    beta = params[3]
    d = params[4]
    out = np.empty(6)
    for i in range(3):
        prev = 3 + (i + 2) % 3  # m1 <- p3, m2 <- p1, m3 <- p2
        p = max(y[prev], 0.0)
        out[i] = a0 + a / (1.0 + p**n) - d * y[i]
        out[3 + i] = beta * (y[i] - y[3 + i])
    return out


@njit(cache=True)
def nand_deriv(y, params, u):
    """Metabolic NAND gate. y = (S3, S4, S5, S6, S7), u = (I1, I2).

    params = (Vmax1..6, KD1..6, KI1..3).
    """
    s3, s4, s5, s6, s7 = y[0], y[1], y[2], y[3], y[4]
    vm = params[0:6]
    kd = params[6:12]
    ki = params[12:15]
    i1 = u[0]
    i2 = u[1]
    r1 = s3 * vm[0] / ((s3 + kd[0]) * (1.0 + i1 / ki[0]))
    r2 = s3 * vm[1] / ((s3 + kd[1]) * (1.0 + i2 / ki[1]))
    r3 = s4 * vm[2] / (s4 + kd[2])
    r4 = s5 * vm[3] / (s5 + kd[3])
    r5 = s7 * vm[4] / ((s7 + kd[4]) * (1.0 + s3 / ki[2]))
    r6 = s6 * vm[5] / (s6 + kd[5])
    out = np.empty(5)
    out[0] = -r1 - r2 + r3 + r4
    out[1] = r1 - r3
    out[2] = r2 - r4
    out[3] = r5 - r6
    out[4] = r6 - r5
    return out


@njit(cache=True)
def ssystem_deriv(y, params, u):
    """Five-variable S-system.

    params = (alpha1..5, beta1..5, g13, g15, g21, g32, g43, g45, g54,
    h11, h22, h32, h33, h44, h55). States are floored at 1e-12 before
    exponentiation.
    """
    x = np.empty(5)
    for i in range(5):
        x[i] = max(y[i], SSYSTEM_EPS)
    al = params[0:5]
    be = params[5:10]
    g13, g15, g21, g32, g43, g45, g54 = params[10], params[11], params[12], params[13], params[14], params[15], params[16]
    h11, h22, h32, h33, h44, h55 = params[17], params[18], params[19], params[20], params[21], params[22]
    out = np.empty(5)
    out[0] = al[0] * x[2] ** g13 * x[4] ** g15 - be[0] * x[0] ** h11
    out[1] = al[1] * x[0] ** g21 - be[1] * x[1] ** h22
    out[2] = al[2] * x[1] ** g32 - be[2] * x[1] ** h32 * x[2] ** h33
    out[3] = al[3] * x[2] ** g43 * x[4] ** g45 - be[3] * x[3] ** h44
    out[4] = al[4] * x[3] ** g54 - be[4] * x[4] ** h55
    return out


@dataclass(frozen=True)
class OdeSystem:
    name: str
    state_dim: int
    param_names: tuple
    deriv: Callable
    input_dim: int = 0
    state_names: tuple = ()

    @property
    def param_dim(self) -> int:
        return len(self.param_names)


SYSTEMS = {
    "repressilator": OdeSystem(
        "repressilator", 6, ("alpha0", "alpha", "n", "beta", "d"), repressilator_deriv,
        state_names=("m1", "m2", "m3", "p1", "p2", "p3"),
    ),
    "nand": OdeSystem(
        "nand", 5,
        tuple(f"Vmax{i}" for i in range(1, 7)) + tuple(f"KD{i}" for i in range(1, 7))
        + tuple(f"KI{i}" for i in range(1, 4)),
        nand_deriv, input_dim=2, state_names=("S3", "S4", "S5", "S6", "S7"),
    ),
    "ssystem": OdeSystem(
        "ssystem", 5,
        tuple(f"alpha{i}" for i in range(1, 6)) + tuple(f"beta{i}" for i in range(1, 6))
        + ("g13", "g15", "g21", "g32", "g43", "g45", "g54",
           "h11", "h22", "h32", "h33", "h44", "h55"),
        ssystem_deriv, state_names=("X1", "X2", "X3", "X4", "X5"),
    ),
}


@dataclass
class Trajectory:
    time_grid: np.ndarray
    states: np.ndarray  # (len(time_grid), state_dim)


@dataclass
class ObservedDataset:
    y0: np.ndarray
    time_grid: np.ndarray
    values: np.ndarray            # (len(time_grid), len(observed))
    observed: tuple               # state indices the columns refer to
    inputs: Optional[np.ndarray] = None  # piecewise-constant table rows (t_start, u...)

    def __post_init__(self):
        self.y0 = np.asarray(self.y0, dtype=float)
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.time_grid) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if self.values.shape[0] != self.time_grid.shape[0]:
            raise ValueError("observation rows must match the time grid")


@dataclass
class Observations:
    datasets: list = field(default_factory=list)

    def __len__(self):
        return len(self.datasets)


def _input_table(inputs, input_dim: int) -> np.ndarray:
    if inputs is None or input_dim == 0:
        return np.zeros((1, 1 + max(input_dim, 0)))
    table = np.asarray(inputs, dtype=float)
    if table.ndim == 1:
        table = np.concatenate([[-np.inf], table]).reshape(1, -1)
    return table


@njit(cache=True)
def _inputs_at(table, t):
    row = 0
    for r in range(table.shape[0]):
        if table[r, 0] <= t:
            row = r
    return table[row, 1:]


@njit(cache=True)
def _rk4(deriv, y, params, u, h):
    k1 = deriv(y, params, u)
    k2 = deriv(y + 0.5 * h * k1, params, u)
    k3 = deriv(y + 0.5 * h * k2, params, u)
    k4 = deriv(y + h * k3, params, u)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _integrate_kernel(deriv, y0, params, table, grid, max_step, out):
    """Fill ``out`` row by row; return -inf on success or the failure time."""
    y = y0.copy()
    out[0] = y
    for g in range(1, grid.shape[0]):
        t0 = grid[g - 1]
        span = grid[g] - t0
        n_sub = int(math.ceil(span / max_step - 1e-9))
        if n_sub < 1:
            n_sub = 1
        h = span / n_sub
        for s in range(n_sub):
            t = t0 + s * h
            u = _inputs_at(table, t)
            y = _rk4(deriv, y, params, u, h)
            for v in y:
                if not math.isfinite(v):
                    return t + h
        out[g] = y
    return -np.inf


def rk4_step(system, y, params, inputs, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    deriv = system.deriv if isinstance(system, OdeSystem) else system
    y = np.asarray(y, dtype=float)
    p = np.asarray(params, dtype=float)
    u = np.asarray(inputs if inputs is not None else [], dtype=float)
    k1 = np.asarray(deriv(y, p, u), dtype=float)
    k2 = np.asarray(deriv(y + 0.5 * h * k1, p, u), dtype=float)
    k3 = np.asarray(deriv(y + 0.5 * h * k2, p, u), dtype=float)
    k4 = np.asarray(deriv(y + h * k3, p, u), dtype=float)
    if not all(np.all(np.isfinite(k)) for k in (k1, k2, k3, k4)):
        raise IntegrationError("non-finite derivative")
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system, y0, params, inputs, time_grid, max_step: float) -> Trajectory:
    """Integrate on a grid; each interval is cut into equal substeps <= max_step.

    ``inputs`` is either a constant input vector or a table whose rows are
    ``(t_start, u_1, ..., u_m)``; the last row with ``t_start <= t`` applies.
    Raises ``IntegrationError`` (with the time of failure) when the state
    stops being finite.
    """
    if max_step <= 0:
        raise ValueError("max_step must be positive")
    if isinstance(system, OdeSystem):
        deriv, input_dim = system.deriv, system.input_dim
    else:
        deriv = system
        arr = None if inputs is None else np.asarray(inputs, dtype=float)
        if arr is None:
            input_dim = 0
        else:
            input_dim = arr.shape[0] if arr.ndim == 1 else arr.shape[1] - 1
    grid = np.asarray(time_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be a non-empty strictly increasing sequence")
    y0 = np.asarray(y0, dtype=float)
    params = np.asarray(params, dtype=float)
    table = _input_table(inputs, input_dim)
    out = np.empty((grid.size, y0.size))
    if isinstance(deriv, CPUDispatcher):
        fail = _integrate_kernel(deriv, y0, params, table, grid, float(max_step), out)
        if fail != -np.inf:
            raise IntegrationError(f"state became non-finite at t={fail:g}", fail)
        return Trajectory(grid, out)
    y = y0.copy()
    out[0] = y
    for g in range(1, grid.size):
        t0 = grid[g - 1]
        span = grid[g] - t0
        n_sub = max(1, math.ceil(span / max_step - 1e-9))
        h = span / n_sub
        for s in range(n_sub):
            t = t0 + s * h
            u = _inputs_at.py_func(table, t)
            try:
                y = rk4_step(deriv, y, params, u, h)
            except IntegrationError:
                raise IntegrationError(f"non-finite derivative at t={t:g}", t) from None
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"state became non-finite at t={t + h:g}", t + h)
        out[g] = y
    return Trajectory(grid, out)


def _residual_ss(sim: Trajectory, obs: ObservedDataset) -> float:
    if sim.states.shape[0] != obs.values.shape[0] or not np.array_equal(sim.time_grid, obs.time_grid):
        raise ValueError("simulation and observation grids differ")
    diff = obs.values - sim.states[:, list(obs.observed)]
    return float(np.sum(diff * diff))


def _pairs(sims, obs):
    if isinstance(sims, Trajectory):
        sims = [sims]
    if isinstance(obs, ObservedDataset):
        obs = [obs]
    elif isinstance(obs, Observations):
        obs = obs.datasets
    if len(sims) != len(obs):
        raise ValueError(f"{len(sims)} simulations for {len(obs)} datasets")
    return zip(sims, obs)


def sse_objective(sims, obs) -> float:
    """Sum of squared errors over datasets, time points and observed variables."""
    return sum(_residual_ss(s, o) for s, o in _pairs(sims, obs))


def nll_objective(sims, obs) -> float:
    """Gaussian negative log-likelihood with unit variance, constants dropped."""
    return 0.5 * sse_objective(sims, obs)


def log_transform(v: float) -> float:
    """Order-preserving sign(v) * log(1 + |v|), mapping 0 to 0."""
    return math.copysign(math.log1p(abs(v)), v)


def log_nll_objective(sims, obs) -> float:
    return log_transform(nll_objective(sims, obs))


OBJECTIVES = {"sse": sse_objective, "nll": nll_objective, "log-nll": log_nll_objective}


def simulate_dataset(system: OdeSystem, params, ds: ObservedDataset, max_step: float) -> Trajectory:
    return integrate(system, ds.y0, params, ds.inputs, ds.time_grid, max_step)


def default_max_step(grid, divisions: int = 10) -> float:
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        return 1.0
    return float(np.min(np.diff(grid))) / divisions


class EstimationObjective:
    """F(x) for parameter estimation: simulate every dataset and score it.

    ``x`` holds only the estimated parameters; the rest are taken from
    ``fixed``. A failed integration scores ``PENALTY`` before any
    log-transform.
    """

    def __init__(self, system: OdeSystem, observations: Observations, objective: str,
                 estimated: Sequence[int], fixed: np.ndarray, max_step: Optional[float] = None,
                 step_divisions: int = 10):
        if objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {objective!r}")
        self.system = system
        self.observations = observations
        self.objective = objective
        self.estimated = np.asarray(estimated, dtype=np.int64)
        self.fixed = np.asarray(fixed, dtype=float)
        self.k = len(self.estimated)
        self.max_steps = [
            max_step if max_step is not None else default_max_step(ds.time_grid, step_divisions)
            for ds in observations.datasets
        ]
        self._tables = [_input_table(ds.inputs, system.input_dim) for ds in observations.datasets]
        self._out = [np.empty((ds.time_grid.size, system.state_dim)) for ds in observations.datasets]

    def full_params(self, x) -> np.ndarray:
        p = self.fixed.copy()
        p[self.estimated] = np.asarray(x, dtype=float)
        return p

    def raw(self, x) -> float:
        """Summed squared error, or PENALTY on integration failure."""
        params = self.full_params(x)
        total = 0.0
        for ds, table, out, h in zip(self.observations.datasets, self._tables, self._out, self.max_steps):
            fail = _integrate_kernel(self.system.deriv, ds.y0, params, table, ds.time_grid, h, out)
            if fail != -np.inf:
                return PENALTY
            diff = ds.values - out[:, list(ds.observed)]
            with np.errstate(over="ignore", invalid="ignore"):
                total += float(np.sum(diff * diff))
        if not math.isfinite(total):
            return PENALTY
        return total

    def __call__(self, x) -> float:
        sse = self.raw(x)
        if sse >= PENALTY:
            value = PENALTY
        elif self.objective == "sse":
            value = sse
        else:
            value = 0.5 * sse
        if self.objective == "log-nll":
            return log_transform(value)
        return min(value, PENALTY)
