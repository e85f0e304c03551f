"""Experiment orchestration: benchmark and estimation campaigns, grid tuning.

Output layout of a campaign directory::

    config.resolved.yaml      fully resolved configuration
    manifest.csv              every planned run (problem, method, run)
    summary.csv               one row per finished run
    timing.json               wall-clock seconds per run (kept out of the CSVs
                              so reruns stay byte-identical)
    <problem>/<method>/run_<i>/convergence.csv
    <problem>/<method>/run_<i>/runlog.csv

``method`` is ``DE`` for the plain baseline and ``<SURROGATE>-<RELEVATOR>``
for meta-model runs.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .benchmarks import REGISTRY, BenchmarkFunction, overall_pi, speedup_on_logs
from .history import EvaluationHistory, write_run_log
from .learners import FAMILIES, LearnerSpec
from .metamodel import MetaModel, MetaModelConfig
from .optimizer import ConvergenceLog, DEConfig, TrueEvalTracker, de_run
from .probdefs import BUILTIN, ProblemError, load_grid, load_problem, load_suite, make_objective

BASELINE = "DE"
BENCH_BUDGET_PER_DIM = 1000
ESTIMATE_BUDGET_PER_DIM = 10000
# meta-model runs stop on true evaluations; the call cap only guards
# against a controller that never lets the objective through
CALL_CAP_FACTOR = 50


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "bench"
    problems: list = field(default_factory=list)
    pairs: list = field(default_factory=lambda: [("TREE", "RF")])
    metamodel: dict = field(default_factory=dict)
    de: dict = field(default_factory=dict)
    seeds: int = 10
    base_seed: int = 0
    budget_per_dim: Optional[int] = None
    baseline: bool = True
    run_metamodel: bool = True
    runlog: bool = True
    out: str = "out"
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in ("bench", "estimate", "tune"):
            raise ConfigError(f"mode: unknown mode {self.mode!r}")
        if self.seeds < 1:
            raise ConfigError("seeds: need at least one run per problem")
        if not self.problems:
            raise ConfigError("problems: nothing to run")
        pairs = []
        for sur, rel in self.pairs:
            sur, rel = sur.upper(), rel.upper()
            for fam in (sur, rel):
                if fam not in FAMILIES:
                    raise ConfigError(f"learner: unknown family {fam!r}, expected one of {FAMILIES}")
            pairs.append((sur, rel))
        self.pairs = pairs
        for pid in self.problems:
            resolve_problem(pid, self.mode)  # fail before any run starts
        MetaModelConfig(**self.metamodel)
        unknown = set(self.de) - {"pop_size", "weight_f", "crossover_cr"}
        if unknown:
            raise ConfigError(f"de: unknown keys {sorted(unknown)}")

    @property
    def budget_factor(self) -> int:
        if self.budget_per_dim is not None:
            return int(self.budget_per_dim)
        return ESTIMATE_BUDGET_PER_DIM if self.mode == "estimate" else BENCH_BUDGET_PER_DIM

    @property
    def mm_config(self) -> MetaModelConfig:
        return MetaModelConfig(**self.metamodel)

    def resolved(self) -> dict:
        doc = asdict(self)
        doc["pairs"] = [list(p) for p in self.pairs]
        doc["metamodel"] = asdict(self.mm_config)
        doc["budget_per_dim"] = self.budget_factor
        doc.pop("jobs")
        doc.pop("out")
        return doc


def run_seed(base_seed: int, problem_id: str, run_index: int) -> int:
    """Stable per-run seed: first 4 bytes of sha256("base:problem:index")."""
    digest = hashlib.sha256(f"{base_seed}:{problem_id}:{run_index}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def bench_problem_id(fid: str, k: int, instance: int = 1) -> str:
    return f"{fid}_d{k}_i{instance}"


def _parse_bench_id(pid: str):
    try:
        fid, d, i = pid.rsplit("_", 2)
        if not (d.startswith("d") and i.startswith("i")):
            raise ValueError
        return fid, int(d[1:]), int(i[1:])
    except ValueError:
        raise ConfigError(f"problem: {pid!r} is not of the form <function>_d<k>_i<instance>") from None


def resolve_problem(pid: str, mode: str):
    """Return (objective, bounds, k) for a problem id."""
    if mode == "estimate":
        try:
            problem = load_problem(pid)
        except ProblemError as exc:
            raise ConfigError(str(exc)) from None
        return make_objective(problem), problem.bounds, problem.k
    fid, k, inst = _parse_bench_id(pid)
    if fid not in REGISTRY:
        raise ConfigError(f"problem: unknown benchmark function {fid!r}")
    fn = BenchmarkFunction(fid, k, inst)
    return fn, tuple(fn.bounds), k


def suite_problems(manifest=None, functions: Optional[Sequence[str]] = None,
                   dims: Optional[Sequence[int]] = None) -> list:
    doc = load_suite(manifest)
    fids = [f["id"] for f in doc["functions"]]
    if functions:
        missing = [f for f in functions if f not in REGISTRY]
        if missing:
            raise ConfigError(f"functions: unknown ids {missing}")
        fids = list(functions)
    dims = list(dims) if dims else list(doc["dims"])
    inst = int(doc.get("instance", 1))
    return [bench_problem_id(f, k, inst) for k in dims for f in fids]


def method_name(pair) -> str:
    return BASELINE if pair is None else f"{pair[0]}-{pair[1]}"


@dataclass(frozen=True)
class Cell:
    problem: str
    pair: Optional[tuple]
    run: int

    @property
    def method(self) -> str:
        return method_name(self.pair)

    def directory(self, root) -> Path:
        return Path(root) / self.problem / self.method / f"run_{self.run}"


class _Recorder:
    """Plain objective that keeps a history like the meta model does."""

    def __init__(self, func, k):
        self.func = func
        self.history = EvaluationHistory(k)

    def __call__(self, x):
        value = float(self.func(x))
        self.history.record(x, value, 1)
        return value


def run_cell(cfg: ExperimentConfig, cell: Cell, root=None) -> dict:
    """Run one DE optimization (baseline or meta model) and write its logs."""
    objective, bounds, k = resolve_problem(cell.problem, cfg.mode)
    seed = run_seed(cfg.base_seed, cell.problem, cell.run)
    n_true = cfg.budget_factor * k
    t0 = time.perf_counter()
    if cell.pair is None:
        rec = _Recorder(objective, k)
        de_cfg = DEConfig(bounds, budget=n_true, seed=seed, **cfg.de)
        result = de_run(rec, de_cfg, k)
        history = rec.history
    else:
        tracker = TrueEvalTracker(objective)
        mm = MetaModel(tracker, k, LearnerSpec(cell.pair[0], seed=seed),
                       LearnerSpec(cell.pair[1], seed=seed), cfg.mm_config)
        de_cfg = DEConfig(bounds, budget=CALL_CAP_FACTOR * n_true, seed=seed,
                          true_budget=n_true, **cfg.de)
        result = de_run(mm, de_cfg, k, tracker=tracker)
        history = mm.history
    wall = time.perf_counter() - t0
    row = {
        "problem": cell.problem,
        "method": cell.method,
        "run": cell.run,
        "seed": seed,
        "final_best": result.value,
        "true_evals": history.n_evals_f,
        "calls": history.n_evals,
        "substitution_rate": history.substitution_rate(),
    }
    if root is not None:
        d = cell.directory(root)
        d.mkdir(parents=True, exist_ok=True)
        result.log.to_csv(d / "convergence.csv")
        if cfg.runlog:
            write_run_log(history, d / "runlog.csv")
    row["_wall"] = wall
    row["_log"] = result.log
    return row


def _run_cell_job(args):
    cfg, cell, root = args
    row = run_cell(cfg, cell, root)
    row.pop("_log")
    return row


def plan_cells(cfg: ExperimentConfig) -> list:
    cells = []
    for pid in cfg.problems:
        for i in range(cfg.seeds):
            if cfg.baseline:
                cells.append(Cell(pid, None, i))
            if cfg.run_metamodel:
                cells.extend(Cell(pid, pair, i) for pair in cfg.pairs)
    return cells


SUMMARY_FIELDS = ["problem", "method", "run", "seed", "final_best", "true_evals", "calls",
                  "substitution_rate"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run every planned cell; returns the summary rows in plan order."""
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.resolved.yaml").write_text(yaml.safe_dump(cfg.resolved(), sort_keys=True))
    cells = plan_cells(cfg)
    with open(root / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["problem", "method", "run", "path"])
        for c in cells:
            w.writerow([c.problem, c.method, c.run, c.directory(".").as_posix()])
    jobs = [(cfg, c, root) for c in cells]
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_run_cell_job, jobs))
    else:
        rows = [_run_cell_job(j) for j in jobs]
    with open(root / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in SUMMARY_FIELDS])
    timing = {f"{r['problem']}/{r['method']}/run_{r['run']}": round(r["_wall"], 3) for r in rows}
    (root / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True) + "\n")
    return rows


# -- grid tuning ---------------------------------------------------------------

def grid_configs(grid: dict, base: Optional[dict] = None) -> list:
    keys = ("T1", "T2", "I1", "I2", "r")
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        out.append(MetaModelConfig(**{**(base or {}), **dict(zip(keys, values))}))
    return out


def tune_grid(cfg: ExperimentConfig, grid="table1", root=None) -> dict:
    """Best meta-model configuration per (surrogate, relevator) pair.

    Every configuration is scored by pi over the selected problems, where
    each problem's pi_f is the median over runs against the matched
    baseline run. Returns ``{pair: (MetaModelConfig, pi, table)}`` with
    ``table`` the list of (config, pi) for every candidate.
    """
    if not cfg.problems:
        raise ConfigError("tune: empty suite")
    grid = load_grid(grid) if isinstance(grid, (str, os.PathLike)) else grid
    configs = grid_configs(grid, {k: v for k, v in cfg.metamodel.items()
                                  if k not in ("T1", "T2", "I1", "I2", "r")})
    base_cfg = replace(cfg, run_metamodel=False, baseline=True)
    baselines = {}
    cells = [Cell(p, None, i) for p in cfg.problems for i in range(cfg.seeds)]
    for c in cells:
        baselines[(c.problem, c.run)] = run_cell(base_cfg, c)["_log"]

    results = {}
    for pair in cfg.pairs:
        table = []
        for mmc in configs:
            sub = replace(cfg, metamodel=asdict(mmc), baseline=False)
            jobs = [(sub, Cell(p, pair, i)) for p in cfg.problems for i in range(cfg.seeds)]
            if cfg.jobs > 1:
                with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                    logs = list(pool.map(_tune_job, jobs))
            else:
                logs = [_tune_job(j) for j in jobs]
            per_problem = {}
            for (_, c), log in zip(jobs, logs):
                per_problem.setdefault(c.problem, []).append(
                    speedup_on_logs(baselines[(c.problem, c.run)], log))
            rep = overall_pi([float(np.median(v)) for v in per_problem.values()])
            table.append((mmc, rep.pi))
        best = max(table, key=lambda t: t[1])  # first maximum wins ties
        results[pair] = (best[0], best[1], table)
    if root is not None:
        write_tune_results(results, root)
    return results


def _tune_job(args):
    cfg, cell = args
    return run_cell(cfg, cell)["_log"]


def write_tune_results(results: dict, root) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "tune.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["surrogate", "relevator", "T1", "T2", "I1", "I2", "r", "pi"])
        for (sur, rel), (_, _, table) in results.items():
            for mmc, pi in table:
                w.writerow([sur, rel, mmc.T1, mmc.T2, mmc.I1, mmc.I2, mmc.r, repr(pi)])
    best = {f"{s}-{r}": {**asdict(c), "pi": pi} for (s, r), (c, pi, _) in results.items()}
    (root / "tune_best.yaml").write_text(yaml.safe_dump(best, sort_keys=True))


def load_config_file(path) -> dict:
    """Read a campaign config (YAML mapping); unknown top-level keys are errors."""
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except FileNotFoundError:
        raise ConfigError(f"config: file {str(path)!r} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: malformed YAML ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a mapping")
    allowed = {"metamodel", "de", "seeds", "base_seed", "budget_per_dim", "pairs", "runlog", "baseline"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    return doc


def read_summary(root) -> list:
    with open(Path(root) / "summary.csv", newline="") as fh:
        return list(csv.DictReader(fh))
