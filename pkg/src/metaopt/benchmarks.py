"""Shifted, rotated black-box test functions and speedup metrics.

The suite mirrors three classes of the BBOB noiseless testbed:

* ``hc`` uni-modal, high conditioning: ellipsoid, discus, bent cigar,
  sharp ridge, different powers
* ``ms`` multi-modal, adequate global structure: Rastrigin, Weierstrass,
  Schaffers F7 (conditioning 10 and 1000), Griewank-Rosenbrock
* ``mw`` multi-modal, weak global structure: Schwefel, Gallagher 101 and
  21 peaks, Katsuura, Lunacek bi-Rastrigin

Every function is written as ``V + g(z)`` with ``g >= 0`` and ``g(0) = 0``
where ``z`` is a transform of ``x - shift``, so the global minimum is ``V``
and sits exactly at ``shift``. The asymmetric and oscillation transforms of
the original testbed are omitted; they are bijections fixing the optimum
and do not change the class.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .optimizer import ConvergenceLog

CLASSES = {
    "hc": "uni-modal, high conditioning",
    "ms": "multi-modal, adequate global structure",
    "mw": "multi-modal, weak global structure",
}

BOUNDS = (-5.0, 5.0)


def _seed_for(*parts) -> int:
    digest = hashlib.sha256("/".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def random_rotation(k: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def _lambda(k: int, alpha: float) -> np.ndarray:
    if k == 1:
        return np.ones(1)
    return alpha ** (0.5 * np.arange(k) / (k - 1))


# each builder gets (k, rng) and returns g(u) with u = x - shift


def _ellipsoid(k, rng):
    R = random_rotation(k, rng)
    w = 10.0 ** (6.0 * np.arange(k) / max(k - 1, 1))
    return lambda u: float(w @ (R @ u) ** 2)


def _discus(k, rng):
    R = random_rotation(k, rng)

    def g(u):
        z = R @ u
        return float(1e6 * z[0] ** 2 + np.sum(z[1:] ** 2))
    return g


def _bent_cigar(k, rng):
    R = random_rotation(k, rng)

    def g(u):
        z = R @ u
        return float(z[0] ** 2 + 1e6 * np.sum(z[1:] ** 2))
    return g


def _sharp_ridge(k, rng):
    R = random_rotation(k, rng)
    Q = random_rotation(k, rng)
    M = Q @ np.diag(_lambda(k, 10.0)) @ R

    def g(u):
        z = M @ u
        return float(z[0] ** 2 + 100.0 * math.sqrt(float(np.sum(z[1:] ** 2))))
    return g


def _different_powers(k, rng):
    R = random_rotation(k, rng)
    p = 2.0 + 4.0 * np.arange(k) / max(k - 1, 1)
    return lambda u: math.sqrt(float(np.sum(np.abs(R @ u) ** p)))


def _rastrigin(k, rng):
    R = random_rotation(k, rng)
    Q = random_rotation(k, rng)
    M = R @ np.diag(_lambda(k, 10.0)) @ Q

    def g(u):
        z = M @ u
        return float(10.0 * np.sum(1.0 - np.cos(2.0 * math.pi * z)) + z @ z)
    return g


def _weierstrass(k, rng):
    R = random_rotation(k, rng)
    Q = random_rotation(k, rng)
    M = R @ np.diag(_lambda(k, 0.01)) @ Q
    a = 0.5 ** np.arange(12)
    b = 3.0 ** np.arange(12)
    f0 = float(np.sum(a * np.cos(math.pi * b)))

    def g(u):
        z = M @ u
        inner = np.cos(2.0 * math.pi * np.outer(z + 0.5, b)) @ a - f0
        # inner >= 0 with equality at z = 0; rounding can leave -1e-16
        return float(10.0 * max(float(np.mean(inner)), 0.0) ** 3)
    return g


def _schaffers(cond):
    def build(k, rng):
        R = random_rotation(k, rng)
        Q = random_rotation(k, rng)
        M = np.diag(_lambda(k, cond)) @ Q @ R

        def g(u):
            z = M @ u
            if k == 1:
                s = np.abs(z)
            else:
                s = np.sqrt(z[:-1] ** 2 + z[1:] ** 2)
            t = np.sqrt(s) + np.sqrt(s) * np.sin(50.0 * s**0.2) ** 2
            return float(np.mean(t) ** 2)
        return g
    return build


def _griewank_rosenbrock(k, rng):
    R = random_rotation(k, rng)
    c = max(1.0, math.sqrt(k) / 8.0)

    def g(u):
        z = c * (R @ u) + 1.0
        if k == 1:
            s = (z - 1.0) ** 2
        else:
            s = 100.0 * (z[:-1] ** 2 - z[1:]) ** 2 + (z[:-1] - 1.0) ** 2
        return float(10.0 * np.mean(s / 4000.0 - np.cos(s) + 1.0))
    return g


_SCHWEFEL_U = 420.96874635998194


def _schwefel_term(u):
    return -u * np.sin(np.sqrt(np.abs(u)))


def _schwefel(k, rng):
    R = random_rotation(k, rng)
    g_star = float(_schwefel_term(np.array(_SCHWEFEL_U)))

    def g(u):
        v = 100.0 * (R @ u) + _SCHWEFEL_U
        inside = np.clip(v, -500.0, 500.0)
        excess = np.maximum(np.abs(v) - 500.0, 0.0)
        # clip keeps the term at or above its in-box minimum
        terms = np.maximum(_schwefel_term(inside) - g_star, 0.0)
        return float(np.sum(terms) / k + 1e-2 * np.sum(excess**2))
    return g


def _gallagher(n_peaks):
    def build(k, rng):
        R = random_rotation(k, rng)
        # peak 0 is the global one at u = 0, height 10
        weights = np.empty(n_peaks)
        weights[0] = 10.0
        if n_peaks > 1:
            weights[1:] = 1.1 + 8.0 * np.arange(n_peaks - 1) / max(n_peaks - 2, 1)
        centers = np.zeros((n_peaks, k))
        centers[1:] = rng.uniform(-4.0, 4.0, size=(n_peaks - 1, k))
        base = 1000.0 if n_peaks > 50 else 1000.0 ** 2
        conds = np.empty(n_peaks)
        conds[0] = math.sqrt(1000.0) if n_peaks > 50 else 1000.0
        conds[1:] = base ** (rng.permutation(n_peaks - 1) / max(n_peaks - 2, 1))
        scales = []
        for c in conds:
            lam = c ** (np.arange(k) / max(k - 1, 1) - 0.5) / c**0.25
            scales.append(rng.permutation(lam))
        scales = np.array(scales)

        def g(u):
            d = (centers - u) @ R.T
            q = np.sum(scales * d * d, axis=1)
            peak = np.max(weights * np.exp(-q / (2.0 * k)))
            return float((10.0 - peak) ** 2)
        return g
    return build


def _katsuura(k, rng):
    R = random_rotation(k, rng)
    Q = random_rotation(k, rng)
    M = Q @ np.diag(_lambda(k, 100.0)) @ R
    pw = 2.0 ** np.arange(1, 33)
    expo = 10.0 / k**1.2

    def g(u):
        z = M @ u
        t = np.outer(z, pw)
        s = np.sum(np.abs(t - np.round(t)) / pw, axis=1)
        prod = float(np.prod((1.0 + np.arange(1, k + 1) * s) ** expo))
        return 10.0 / k**2 * (prod - 1.0)
    return g


def _lunacek(k, rng):
    R = random_rotation(k, rng)
    Q = random_rotation(k, rng)
    M = Q @ np.diag(_lambda(k, 100.0)) @ R
    mu0 = 2.5
    d = 1.0
    s = 1.0 - 1.0 / (2.0 * math.sqrt(k + 20.0) - 8.2)
    mu1 = -math.sqrt((mu0**2 - d) / s)

    def g(u):
        xh = u + mu0
        first = float(np.sum((xh - mu0) ** 2))
        second = d * k + s * float(np.sum((xh - mu1) ** 2))
        z = M @ u
        return min(first, second) + 10.0 * float(np.sum(1.0 - np.cos(2.0 * math.pi * z)))
    return g


def _sphere(k, rng):
    return lambda u: float(u @ u)


@dataclass(frozen=True)
class FunctionInfo:
    fid: str
    cls: str
    builder: Callable
    title: str


REGISTRY: dict[str, FunctionInfo] = {}


def _register(fid, cls, builder, title):
    REGISTRY[fid] = FunctionInfo(fid, cls, builder, title)


_register("ellipsoid", "hc", _ellipsoid, "rotated ellipsoid, conditioning 1e6")
_register("discus", "hc", _discus, "discus, conditioning 1e6")
_register("bent_cigar", "hc", _bent_cigar, "bent cigar, conditioning 1e6")
_register("sharp_ridge", "hc", _sharp_ridge, "sharp ridge")
_register("different_powers", "hc", _different_powers, "sum of different powers")
_register("rastrigin", "ms", _rastrigin, "rotated Rastrigin, conditioning 10")
_register("weierstrass", "ms", _weierstrass, "Weierstrass, conditioning 100")
_register("schaffers10", "ms", _schaffers(10.0), "Schaffers F7, conditioning 10")
_register("schaffers1000", "ms", _schaffers(1000.0), "Schaffers F7, conditioning 1000")
_register("griewank_rosenbrock", "ms", _griewank_rosenbrock, "composite Griewank-Rosenbrock")
_register("schwefel", "mw", _schwefel, "rotated Schwefel with box penalty")
_register("gallagher101", "mw", _gallagher(101), "Gallagher, 101 peaks")
_register("gallagher21", "mw", _gallagher(21), "Gallagher, 21 peaks")
_register("katsuura", "mw", _katsuura, "Katsuura")
_register("lunacek", "mw", _lunacek, "Lunacek bi-Rastrigin")
# not part of the 15-function suite; handy for controller and DE checks
_register("sphere", "hc", _sphere, "shifted sphere")

SUITE_IDS = [fid for fid in REGISTRY if fid != "sphere"]


@dataclass
class BenchmarkFunction:
    fid: str
    k: int
    instance: int = 1
    cls: str = field(init=False)
    shift: np.ndarray = field(init=False, repr=False)
    optimum: float = field(init=False)

    def __post_init__(self):
        if self.fid not in REGISTRY:
            raise KeyError(f"unknown benchmark function {self.fid!r}")
        info = REGISTRY[self.fid]
        self.cls = info.cls
        rng = np.random.default_rng(_seed_for(self.fid, self.k, self.instance))
        self.shift = np.round(rng.uniform(-4.0, 4.0, size=self.k), 4)
        self.optimum = float(np.round(rng.uniform(-100.0, 100.0), 2))
        self._g = info.builder(self.k, rng)

    @property
    def name(self) -> str:
        return f"{self.fid}_d{self.k}_i{self.instance}"

    @property
    def bounds(self):
        return [BOUNDS] * self.k

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.k,):
            raise ValueError(f"{self.name} expects a vector of length {self.k}")
        return self.optimum + self._g(x - self.shift)


def eval_benchmark(fn: BenchmarkFunction, x) -> float:
    return fn(x)


def evals_to_threshold(log: ConvergenceLog, threshold: float) -> Optional[int]:
    for count, value in zip(log.counts, log.values):
        if value <= threshold:
            return count
    return None


def pi_f(M: Optional[float], N: float) -> float:
    """Speedup max(0, 1 - M/N); ``M=None`` means the target was never reached."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if M is None:
        return 0.0
    if M < 0:
        raise ValueError("M must be >= 0")
    return max(0.0, 1.0 - M / N)


def speedup_on_logs(baseline: ConvergenceLog, metamodel: ConvergenceLog) -> float:
    """pi_f for one matched pair of runs.

    The target is the baseline's final best value; N is the number of true
    evaluations the baseline needed to first reach it.
    """
    target = baseline.final_best
    N = evals_to_threshold(baseline, target)
    M = evals_to_threshold(metamodel, target)
    return pi_f(M, N)


@dataclass(frozen=True)
class SpeedupReport:
    pi_values: tuple
    mean_pi_f: float
    success_share: float
    pi: float


def overall_pi(pi_values: Sequence[float]) -> SpeedupReport:
    v = np.asarray(pi_values, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one pi_f value")
    mean = float(v.mean())
    share = float(np.mean(v > 0))
    return SpeedupReport(tuple(v.tolist()), mean, share, mean + share)


def transposed_curve(log: ConvergenceLog, thresholds: Sequence[float]) -> list:
    """True evaluations needed to reach each threshold (None if never)."""
    return [evals_to_threshold(log, t) for t in thresholds]


def make_suite(fids: Sequence[str], dims: Sequence[int], instance: int = 1) -> list[BenchmarkFunction]:
    return [BenchmarkFunction(fid, k, instance) for k in dims for fid in fids]
