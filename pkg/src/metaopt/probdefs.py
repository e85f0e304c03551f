"""Problem definition files for the ODE estimation problems.

A definition names the model system, lists every kinetic constant with its
reference value, search bounds and whether it is estimated, and describes the
experimental protocol (initial states, sampling grid, input schedule). Every
numeric value carries a provenance flag: ``cited`` when it comes from the
published model, ``substitute`` when it is a local choice.

Definitions are YAML. Observations live in a separate CSV with columns
``dataset_id,time,var_1..var_n``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .odesim import (
    OBJECTIVES,
    SYSTEMS,
    EstimationObjective,
    IntegrationError,
    Observations,
    ObservedDataset,
    default_max_step,
    integrate,
)

PROVENANCE = ("cited", "substitute")

# expected shape of each protocol: (constants, datasets, time points)
EXPECTED = {
    "repressilator": (5, 1, 30),
    "nand": (15, 12, 7),
    "ssystem": (23, 10, 11),
}

BUILTIN = ("repressilator", "nand", "ssystem")


class ProblemError(ValueError):
    """Invalid problem definition; ``errors`` lists one message per field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class Parameter:
    name: str
    reference: float
    low: float
    high: float
    estimate: bool = True
    provenance: str = "substitute"


@dataclass
class Experiment:
    initial_state: np.ndarray
    inputs: Optional[np.ndarray] = None  # rows (t_start, u_1..u_m)
    provenance: str = "substitute"


@dataclass
class ProblemDefinition:
    system: str
    objective: str
    parameters: list
    time_grid: np.ndarray
    datasets: list
    observed: tuple
    bounds_provenance: str = "substitute"
    input_names: tuple = ()
    noise_sd: float = 0.0
    noise_seed: int = 0
    step_divisions: int = 10
    observations: Optional[Observations] = field(default=None, repr=False)

    @property
    def ode(self):
        return SYSTEMS[self.system]

    @property
    def estimated_indices(self) -> list:
        return [i for i, p in enumerate(self.parameters) if p.estimate]

    @property
    def k(self) -> int:
        return len(self.estimated_indices)

    @property
    def true_params(self) -> np.ndarray:
        return np.array([p.reference for p in self.parameters])

    @property
    def bounds(self) -> tuple:
        return tuple((self.parameters[i].low, self.parameters[i].high) for i in self.estimated_indices)

    @property
    def observed_indices(self) -> tuple:
        names = self.ode.state_names
        return tuple(names.index(v) for v in self.observed)

    @property
    def max_step(self) -> float:
        return default_max_step(self.time_grid, self.step_divisions)

    def true_x(self) -> np.ndarray:
        """Reference values of the estimated constants only."""
        return self.true_params[self.estimated_indices]


def _validate(doc: dict) -> list:
    errors = []
    system = doc.get("system")
    if system not in SYSTEMS:
        errors.append(f"system: unknown id {system!r}, expected one of {sorted(SYSTEMS)}")
        return errors
    ode = SYSTEMS[system]
    n_par, n_ds, n_t = EXPECTED[system]
    if doc.get("objective") not in OBJECTIVES:
        errors.append(f"objective: {doc.get('objective')!r} not in {sorted(OBJECTIVES)}")

    params = doc.get("parameters") or []
    if len(params) != n_par:
        errors.append(f"parameters: {system} has {n_par} constants, got {len(params)}")
    for i, p in enumerate(params):
        where = f"parameters[{i}]"
        for key in ("name", "reference", "low", "high"):
            if key not in p:
                errors.append(f"{where}.{key}: missing")
        if i < len(ode.param_names) and p.get("name") != ode.param_names[i]:
            errors.append(f"{where}.name: expected {ode.param_names[i]!r}, got {p.get('name')!r}")
        if "low" in p and "high" in p and not float(p["low"]) < float(p["high"]):
            errors.append(f"{where}: low must be below high")
        if p.get("provenance", "substitute") not in PROVENANCE:
            errors.append(f"{where}.provenance: must be one of {PROVENANCE}")
    if params and not any(p.get("estimate", True) for p in params):
        errors.append("parameters: at least one constant must be estimated")

    grid = np.asarray(doc.get("time_grid") or [], dtype=float)
    if grid.size != n_t:
        errors.append(f"time_grid: {system} protocol has {n_t} time points, got {grid.size}")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        errors.append("time_grid: must be strictly increasing")

    observed = doc.get("observed") or []
    for v in observed:
        if v not in ode.state_names:
            errors.append(f"observed: unknown state {v!r}")
    if not observed:
        errors.append("observed: at least one state must be observed")

    datasets = doc.get("datasets") or []
    if len(datasets) != n_ds:
        errors.append(f"datasets: {system} protocol has {n_ds} experiments, got {len(datasets)}")
    for i, ds in enumerate(datasets):
        where = f"datasets[{i}]"
        y0 = ds.get("initial_state")
        if y0 is None or len(y0) != ode.state_dim:
            errors.append(f"{where}.initial_state: needs {ode.state_dim} values")
        inputs = ds.get("inputs")
        if ode.input_dim:
            if inputs is None:
                errors.append(f"{where}.inputs: {system} needs an input schedule")
            else:
                table = np.asarray(inputs, dtype=float)
                if table.ndim != 2 or table.shape[1] != ode.input_dim + 1:
                    errors.append(f"{where}.inputs: rows must be (t_start, {ode.input_dim} inputs)")
                elif np.any(np.diff(table[:, 0]) <= 0):
                    errors.append(f"{where}.inputs: switch times must increase")
        elif inputs is not None:
            errors.append(f"{where}.inputs: {system} takes no inputs")
        if ds.get("provenance", "substitute") not in PROVENANCE:
            errors.append(f"{where}.provenance: must be one of {PROVENANCE}")
    noise = doc.get("noise") or {}
    if float(noise.get("sd", 0.0)) < 0:
        errors.append("noise.sd: must be non-negative")
    if int(doc.get("step_divisions", 10)) < 1:
        errors.append("step_divisions: must be positive")
    return errors


def problem_from_dict(doc: dict) -> ProblemDefinition:
    errors = _validate(doc)
    if errors:
        raise ProblemError(errors)
    noise = doc.get("noise") or {}
    return ProblemDefinition(
        system=doc["system"],
        objective=doc["objective"],
        parameters=[
            Parameter(p["name"], float(p["reference"]), float(p["low"]), float(p["high"]),
                      bool(p.get("estimate", True)), p.get("provenance", "substitute"))
            for p in doc["parameters"]
        ],
        time_grid=np.asarray(doc["time_grid"], dtype=float),
        datasets=[
            Experiment(np.asarray(d["initial_state"], dtype=float),
                       None if d.get("inputs") is None else np.asarray(d["inputs"], dtype=float),
                       d.get("provenance", "substitute"))
            for d in doc["datasets"]
        ],
        observed=tuple(doc["observed"]),
        bounds_provenance=doc.get("bounds_provenance", "substitute"),
        input_names=tuple(doc.get("input_names", ())),
        noise_sd=float(noise.get("sd", 0.0)),
        noise_seed=int(noise.get("seed", 0)),
        step_divisions=int(doc.get("step_divisions", 10)),
    )


def problem_to_dict(problem: ProblemDefinition) -> dict:
    doc = {
        "system": problem.system,
        "objective": problem.objective,
        "parameters": [
            {"name": p.name, "reference": p.reference, "low": p.low, "high": p.high,
             "estimate": p.estimate, "provenance": p.provenance}
            for p in problem.parameters
        ],
        "bounds_provenance": problem.bounds_provenance,
        "observed": list(problem.observed),
        "time_grid": problem.time_grid.tolist(),
        "datasets": [],
        "noise": {"sd": problem.noise_sd, "seed": problem.noise_seed},
        "step_divisions": problem.step_divisions,
    }
    if problem.input_names:
        doc["input_names"] = list(problem.input_names)
    for ds in problem.datasets:
        entry = {"initial_state": ds.initial_state.tolist()}
        if ds.inputs is not None:
            entry["inputs"] = ds.inputs.tolist()
        entry["provenance"] = ds.provenance
        doc["datasets"].append(entry)
    return doc


def builtin_path(name: str) -> Path:
    if name not in BUILTIN:
        raise ProblemError([f"problem: no built-in definition named {name!r}"])
    return Path(str(resources.files("metaopt") / "data" / f"{name}.yaml"))


def load_problem(path_or_name) -> ProblemDefinition:
    """Load a definition from a YAML file or by built-in name."""
    path = Path(path_or_name)
    if not path.exists() and str(path_or_name) in BUILTIN:
        path = builtin_path(str(path_or_name))
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ProblemError([f"problem: file {str(path)!r} not found"]) from None
    except yaml.YAMLError as exc:
        raise ProblemError([f"problem: malformed YAML ({exc})"]) from None
    if not isinstance(doc, dict):
        raise ProblemError(["problem: top level must be a mapping"])
    problem = problem_from_dict(doc)
    obs_path = doc.get("observations")
    if obs_path:
        problem.observations = read_observations(path.parent / obs_path, problem)
    return problem


def dump_problem(problem: ProblemDefinition, path=None) -> str:
    text = yaml.safe_dump(problem_to_dict(problem), sort_keys=False, default_flow_style=None, width=100)
    if path is not None:
        Path(path).write_text(text)
    return text


def _simulate_all(problem: ProblemDefinition, params) -> list:
    ode = problem.ode
    return [
        integrate(ode, ds.initial_state, params, ds.inputs, problem.time_grid, problem.max_step)
        for ds in problem.datasets
    ]


def generate_observations(problem: ProblemDefinition, true_params=None, noise_sd=None,
                          seed=None) -> Observations:
    """Simulate every experiment at the reference constants, plus optional
    Gaussian noise on the observed states."""
    params = problem.true_params if true_params is None else np.asarray(true_params, dtype=float)
    sd = problem.noise_sd if noise_sd is None else float(noise_sd)
    rng = np.random.default_rng(problem.noise_seed if seed is None else seed)
    obs_idx = problem.observed_indices
    try:
        sims = _simulate_all(problem, params)
    except IntegrationError as exc:
        raise ProblemError([f"parameters: reference constants do not integrate ({exc})"]) from None
    datasets = []
    for ds, sim in zip(problem.datasets, sims):
        values = sim.states[:, list(obs_idx)]
        if sd > 0:
            values = values + rng.normal(0.0, sd, values.shape)
        datasets.append(ObservedDataset(ds.initial_state, problem.time_grid, values, obs_idx, ds.inputs))
    return Observations(datasets)


def write_observations(obs: Observations, path=None) -> str:
    n_var = obs.datasets[0].values.shape[1]
    buf = io.StringIO()
    buf.write("dataset_id,time," + ",".join(f"var_{j + 1}" for j in range(n_var)) + "\n")
    for i, ds in enumerate(obs.datasets):
        for t, row in zip(ds.time_grid, ds.values):
            buf.write(f"{i},{float(t)!r}," + ",".join(repr(float(v)) for v in row) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_observations(path, problem: ProblemDefinition) -> Observations:
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n_var = len(header) - 2
        if n_var != len(problem.observed):
            raise ProblemError([f"observations: {n_var} value columns for {len(problem.observed)} observed states"])
        for line in reader:
            rows.setdefault(int(line[0]), []).append([float(v) for v in line[1:]])
    if sorted(rows) != list(range(len(problem.datasets))):
        raise ProblemError([f"observations: dataset ids must be 0..{len(problem.datasets) - 1}"])
    datasets = []
    for i, exp in enumerate(problem.datasets):
        arr = np.asarray(rows[i])
        if not np.allclose(arr[:, 0], problem.time_grid):
            raise ProblemError([f"observations: dataset {i} times differ from the time grid"])
        datasets.append(ObservedDataset(exp.initial_state, arr[:, 0], arr[:, 1:],
                                        problem.observed_indices, exp.inputs))
    return Observations(datasets)


def make_objective(problem: ProblemDefinition, observations: Optional[Observations] = None,
                   objective: Optional[str] = None) -> EstimationObjective:
    """The estimation objective over the estimated constants of ``problem``."""
    obs = observations or problem.observations or generate_observations(problem)
    return EstimationObjective(problem.ode, obs, objective or problem.objective,
                               problem.estimated_indices, problem.true_params,
                               step_divisions=problem.step_divisions)


def load_suite(path=None) -> dict:
    path = Path(path) if path else Path(str(resources.files("metaopt") / "data" / "suite.yaml"))
    doc = yaml.safe_load(path.read_text())
    errors = []
    for key in ("dims", "functions"):
        if key not in doc:
            errors.append(f"{key}: missing")
    if errors:
        raise ProblemError(errors)
    return doc


def load_grid(path_or_name="table1") -> dict:
    """Candidate values for grid tuning, keyed by meta-model parameter."""
    path = Path(path_or_name)
    if not path.exists():
        path = Path(str(resources.files("metaopt") / "data" / f"{path_or_name}.yaml"))
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ProblemError([f"grid: {str(path_or_name)!r} not found"]) from None
    errors = [f"{key}: missing" for key in ("T1", "T2", "I1", "I2", "r") if key not in doc]
    if errors:
        raise ProblemError(errors)
    return {key: list(doc[key]) for key in ("T1", "T2", "I1", "I2", "r")}
