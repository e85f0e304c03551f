import csv
import filecmp
import json

import pytest
import yaml
from click.testing import CliRunner

from metaopt.cli import main
from metaopt.runner import ExperimentConfig, ConfigError, plan_cells, run_seed


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def small_bench(out, *extra):
    return invoke("bench", "--functions", "sphere,rastrigin", "--dims", "2", "--seeds", "2",
                  "--budget-per-dim", "60", "--surrogate", "KNN", "--relevator", "KNN",
                  "--out", out, *extra)


def tiny_config(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump({"metamodel": {"T1": 0, "T2": 30, "I1": 0, "I2": 10, "r": 0.5}}))
    return path


def test_seed_policy_is_stable():
    assert run_seed(0, "sphere_d5_i1", 3) == run_seed(0, "sphere_d5_i1", 3)
    assert len({run_seed(0, "p", i) for i in range(100)}) == 100
    assert run_seed(1, "p", 0) != run_seed(0, "p", 0)


def test_plan_counts():
    cfg = ExperimentConfig(problems=["sphere_d2_i1", "rastrigin_d2_i1", "ellipsoid_d2_i1"], seeds=10)
    assert len(plan_cells(cfg)) == 60


def test_unknown_problem_fails_before_running():
    with pytest.raises(ConfigError):
        ExperimentConfig(problems=["sphere_d2_i1", "nosuch_d2_i1"])
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="estimate", problems=["lorenz"])
    with pytest.raises(ConfigError):
        ExperimentConfig(problems=["sphere_d2_i1"], pairs=[("TREE", "XGB")])


def test_bench_writes_layout_and_is_reproducible(tmp_path):
    cfg = tiny_config(tmp_path)
    for name in ("a", "b"):
        result = small_bench(tmp_path / name, "--config", cfg)
        assert result.exit_code == 0, result.output
    a, b = tmp_path / "a", tmp_path / "b"
    rows = list(csv.DictReader(open(a / "summary.csv")))
    assert len(rows) == 8
    for r in rows:
        d = a / r["problem"] / r["method"] / f"run_{r['run']}"
        assert (d / "convergence.csv").exists() and (d / "runlog.csv").exists()
        n_calls, n_true = int(r["calls"]), int(r["true_evals"])
        assert float(r["substitution_rate"]) == pytest.approx(1 - n_true / n_calls)
        if r["method"] != "DE":
            assert n_true == 120
    for path in a.rglob("*.csv"):
        assert filecmp.cmp(path, b / path.relative_to(a), shallow=False), path
    resolved = yaml.safe_load(open(a / "config.resolved.yaml"))
    assert resolved["metamodel"]["T2"] == 30 and resolved["budget_per_dim"] == 60
    assert set(json.load(open(a / "timing.json"))) == {
        f"{r['problem']}/{r['method']}/run_{r['run']}" for r in rows}


def test_bench_rejects_bad_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("metamodel: {r: 1.5}\n")
    result = CliRunner().invoke(main, ["bench", "--functions", "sphere", "--dims", "2",
                                       "--config", str(bad), "--out", str(tmp_path / "o")])
    assert result.exit_code != 0
    result = CliRunner().invoke(main, ["bench", "--functions", "nosuch", "--dims", "2",
                                       "--out", str(tmp_path / "o")])
    assert result.exit_code != 0


def test_estimate_command(tmp_path):
    result = invoke("estimate", "--problem", "repressilator", "--seeds", "1", "--budget-per-dim", "40",
                    "--config", tiny_config(tmp_path), "--out", tmp_path / "e")
    assert result.exit_code == 0, result.output
    rows = list(csv.DictReader(open(tmp_path / "e" / "summary.csv")))
    assert {r["method"] for r in rows} == {"DE", "TREE-RF"}
    assert all(int(r["true_evals"]) == 160 for r in rows)


def test_estimate_unknown_problem(tmp_path):
    result = CliRunner().invoke(main, ["estimate", "--problem", "lorenz", "--out", str(tmp_path)])
    assert result.exit_code != 0


def test_report(tmp_path):
    small_bench(tmp_path / "runs", "--config", tiny_config(tmp_path))
    # drop one log: the report lists it and carries on
    (tmp_path / "runs" / "sphere_d2_i1" / "KNN-KNN" / "run_1" / "convergence.csv").unlink()
    result = invoke("report", "--in", tmp_path / "runs", "--out", tmp_path / "rep")
    assert result.exit_code == 0, result.output
    rep = json.load(open(tmp_path / "rep" / "report.json"))
    assert rep["missing"] == ["sphere_d2_i1/KNN-KNN/run_1/convergence.csv"]
    assert "KNN-KNN" in rep["pi"]
    table = list(csv.reader(open(tmp_path / "rep" / "pi_table.csv")))
    assert table[0] == ["surrogate", "KNN"] and table[1][0] == "KNN"
    for name in ("convergence_sphere_d2_i1.png", "transposed_rastrigin_d2_i1.csv", "ranks.png", "page.csv"):
        assert (tmp_path / "rep" / name).exists()
    # pure function of the logs
    invoke("report", "--in", tmp_path / "runs", "--out", tmp_path / "rep2", "--no-figures")
    for name in ("pi_f.csv", "pi_table.csv", "page.csv", "ranks.csv", "report.json"):
        assert filecmp.cmp(tmp_path / "rep" / name, tmp_path / "rep2" / name, shallow=False)


def test_transposed_rows_absent_when_unreached(tmp_path):
    from metaopt.report import transposed_curves
    from metaopt.optimizer import ConvergenceLog

    runs = {("p", "DE"): {0: ConvergenceLog([1, 10], [5.0, 1.0])},
            ("p", "A-B"): {0: ConvergenceLog([1, 10], [5.0, 3.0])}}
    _, table = transposed_curves(runs, "p")
    reached = {m: [t for mm, t, _ in table if mm == m] for m in ("DE", "A-B")}
    assert min(reached["DE"]) == 1.0
    assert min(reached["A-B"]) >= 3.0
    assert len(reached["A-B"]) < len(reached["DE"])


def test_tune_small_grid(tmp_path):
    grid = tmp_path / "grid.yaml"
    grid.write_text(yaml.safe_dump({"T1": [0], "T2": [20, 30], "I1": [0], "I2": [10], "r": [0.5]}))
    result = invoke("tune", "--grid", grid, "--functions", "sphere", "--dims", "2", "--seeds", "1",
                    "--budget-per-dim", "50", "--surrogate", "KNN", "--relevator", "KNN",
                    "--out", tmp_path / "t")
    assert result.exit_code == 0, result.output
    assert "KNN-KNN" in result.output and "(2 configurations)" in result.output
    rows = list(csv.DictReader(open(tmp_path / "t" / "tune.csv")))
    assert len(rows) == 2
    best = yaml.safe_load(open(tmp_path / "t" / "tune_best.yaml"))
    assert best["KNN-KNN"]["pi"] == max(float(r["pi"]) for r in rows)
