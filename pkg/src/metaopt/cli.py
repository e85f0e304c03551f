"""Command-line entry point: ``metaopt bench|estimate|tune|report``."""

from __future__ import annotations

import itertools
import logging
import sys
from pathlib import Path

import click

from .optimizer import ConfigError as DEConfigError
from .probdefs import BUILTIN, ProblemError
from .runner import ConfigError, ExperimentConfig, load_config_file, run_experiment, suite_problems, tune_grid

log = logging.getLogger("metaopt")


def _families(value):
    return [v.strip().upper() for v in value.split(",") if v.strip()]


def _build_config(mode, problems, surrogate, relevator, config_file, seeds, out, jobs, budget_per_dim,
                  no_baseline=False, no_metamodel=False, runlog=True):
    doc = load_config_file(config_file) if config_file else {}
    pairs = doc.pop("pairs", None)
    if surrogate or relevator or pairs is None:
        pairs = list(itertools.product(_families(surrogate or "TREE"), _families(relevator or "RF")))
    kwargs = {
        "mode": mode,
        "problems": problems,
        "pairs": [tuple(p) for p in pairs],
        "metamodel": doc.get("metamodel", {}) or {},
        "de": doc.get("de", {}) or {},
        "seeds": seeds if seeds is not None else doc.get("seeds", 10),
        "base_seed": doc.get("base_seed", 0),
        "budget_per_dim": budget_per_dim if budget_per_dim is not None else doc.get("budget_per_dim"),
        "baseline": doc.get("baseline", True) and not no_baseline,
        "run_metamodel": not no_metamodel,
        "runlog": doc.get("runlog", runlog) and runlog,
        "out": out,
        "jobs": jobs,
    }
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


common = [
    click.option("--surrogate", default=None, help="Surrogate family, or a comma-separated list."),
    click.option("--relevator", default=None, help="Relevator family, or a comma-separated list."),
    click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None,
                 help="YAML campaign config (metamodel, de, seeds, base_seed, budget_per_dim)."),
    click.option("--seeds", type=int, default=None, help="Independent runs per problem (default 10)."),
    click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory."),
    click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes."),
    click.option("--budget-per-dim", type=int, default=None,
                 help="True-evaluation budget per dimension (1000 bench, 10000 estimate)."),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Surrogate-assisted differential evolution experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@click.option("--suite", default=None, type=click.Path(dir_okay=False),
              help="Suite manifest (YAML); the bundled 15-function suite by default.")
@click.option("--functions", default=None, help="Comma-separated subset of function ids.")
@click.option("--dims", default=None, help="Comma-separated dimensions (default from the manifest).")
@click.option("--no-baseline", is_flag=True, help="Skip the plain DE runs.")
@click.option("--no-runlog", is_flag=True, help="Do not write per-call run logs.")
@with_common
def bench(suite, functions, dims, no_baseline, no_runlog, surrogate, relevator, config_file, seeds, out,
          jobs, budget_per_dim):
    """Benchmark campaign on the synthetic suite."""
    try:
        problems = suite_problems(suite, _families_raw(functions), _ints(dims))
        cfg = _build_config("bench", problems, surrogate, relevator, config_file, seeds, out, jobs,
                            budget_per_dim, no_baseline=no_baseline, runlog=not no_runlog)
        rows = run_experiment(cfg)
    except (ConfigError, ProblemError, DEConfigError) as exc:
        _fail(exc)
    click.echo(f"{len(rows)} runs written to {out}")


@main.command()
@click.option("--problem", "problems", multiple=True, required=True,
              help=f"Problem file or built-in name ({', '.join(BUILTIN)}); repeatable.")
@click.option("--no-baseline", is_flag=True, help="Skip the plain DE runs.")
@click.option("--no-runlog", is_flag=True, help="Do not write per-call run logs.")
@with_common
def estimate(problems, no_baseline, no_runlog, surrogate, relevator, config_file, seeds, out, jobs,
             budget_per_dim):
    """Parameter estimation campaign on ODE problems."""
    try:
        cfg = _build_config("estimate", list(problems), surrogate, relevator, config_file, seeds, out,
                            jobs, budget_per_dim, no_baseline=no_baseline, runlog=not no_runlog)
        rows = run_experiment(cfg)
    except (ConfigError, ProblemError, DEConfigError) as exc:
        _fail(exc)
    click.echo(f"{len(rows)} runs written to {out}")


@main.command()
@click.option("--grid", default="table1", show_default=True, help="Grid name or YAML file.")
@click.option("--suite", default=None, type=click.Path(dir_okay=False))
@click.option("--functions", default=None, help="Comma-separated subset of function ids.")
@click.option("--dims", default="5", show_default=True)
@with_common
def tune(grid, suite, functions, dims, surrogate, relevator, config_file, seeds, out, jobs, budget_per_dim):
    """Grid search of the meta-model parameters, best configuration per pair."""
    try:
        problems = suite_problems(suite, _families_raw(functions), _ints(dims))
        cfg = _build_config("tune", problems, surrogate, relevator, config_file, seeds, out, jobs,
                            budget_per_dim)
        results = tune_grid(cfg, grid, root=out)
    except (ConfigError, ProblemError, DEConfigError) as exc:
        _fail(exc)
    for (sur, rel), (best, pi, table) in results.items():
        click.echo(f"{sur}-{rel}: pi={pi:.4f} T1={best.T1} T2={best.T2} I1={best.I1} I2={best.I2} "
                   f"r={best.r} ({len(table)} configurations)")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--no-figures", is_flag=True, help="Skip the PNG figures.")
def report(in_dir, out, no_figures):
    """Tables, statistical tests and figures from a campaign directory."""
    from .report import build_report

    record = build_report(in_dir, out, figures=not no_figures)
    for path in record["missing"]:
        click.echo(f"missing: {path}", err=True)
    for method, r in record["pi"].items():
        click.echo(f"{method}: pi={r['pi']:.4f} mean pi_f={r['mean_pi_f']:.4f} share={r['success_share']:.2f}")
    click.echo(f"report written to {out}")


def _families_raw(value):
    if not value:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def _ints(value):
    if not value:
        return None
    try:
        return [int(v) for v in str(value).split(",")]
    except ValueError:
        raise ConfigError(f"dims: expected comma-separated integers, got {value!r}") from None


if __name__ == "__main__":
    main()
