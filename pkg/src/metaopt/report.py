"""Post-processing of campaign directories into tables, test results and figures.

Everything here is a pure function of the logs on disk. Outputs:

    pi_f.csv            one row per matched (problem, method, run)
    pi_problem.csv      median pi_f per (problem, method)
    pi_table.csv        overall pi, surrogates as rows, relevators as columns
    transposed_<problem>.csv
                        threshold -> true evaluations, per method; thresholds
                        a method never reached have no row
    page.csv            Page trend test per meta-model method
    ranks.csv           average ranks plus the Nemenyi critical distance
    report.json         all of the above in one record, plus missing logs
    convergence_<problem>.png, transposed_<problem>.png, ranks.png
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .benchmarks import evals_to_threshold, overall_pi, speedup_on_logs
from .optimizer import ConvergenceLog
from .runner import BASELINE
from .stats import (
    Q_ALPHA,
    average_rank_summary,
    cut_points,
    friedman_test,
    min_over_restarts,
    nemenyi_cd,
    page_trend_test,
)

N_THRESHOLDS = 25


def discover_runs(root):
    """Map (problem, method) -> {run: ConvergenceLog}; also list missing logs.

    The manifest names every planned run; runs without a convergence log are
    reported as missing and skipped.
    """
    root = Path(root)
    manifest = root / "manifest.csv"
    planned = []
    if manifest.exists():
        with open(manifest, newline="") as fh:
            for row in csv.DictReader(fh):
                planned.append((row["problem"], row["method"], int(row["run"]), row["path"]))
    else:
        for p in sorted(root.glob("*/*/run_*/convergence.csv")):
            run_dir = p.parent
            planned.append((run_dir.parent.parent.name, run_dir.parent.name,
                            int(run_dir.name.split("_")[1]), run_dir.relative_to(root).as_posix()))
    runs, missing = {}, []
    for problem, method, run, rel in planned:
        path = root / rel / "convergence.csv"
        if not path.exists():
            missing.append(str(Path(rel) / "convergence.csv"))
            continue
        log = ConvergenceLog.from_csv(path)
        if not log.counts:
            missing.append(str(Path(rel) / "convergence.csv"))
            continue
        runs.setdefault((problem, method), {})[run] = log
    return runs, missing


def _split_method(method):
    sur, _, rel = method.partition("-")
    return sur, rel


def speedup_tables(runs):
    """pi_f per matched run, median per problem, and pi per method."""
    problems = sorted({p for p, _ in runs})
    methods = sorted({m for _, m in runs if m != BASELINE})
    rows, per_problem = [], {}
    for problem in problems:
        base = runs.get((problem, BASELINE), {})
        for method in methods:
            mm = runs.get((problem, method), {})
            vals = []
            for run in sorted(set(base) & set(mm)):
                target = base[run].final_best
                N = evals_to_threshold(base[run], target)
                M = evals_to_threshold(mm[run], target)
                v = speedup_on_logs(base[run], mm[run])
                rows.append({"problem": problem, "method": method, "run": run,
                             "N": N, "M": "" if M is None else M, "pi_f": v})
                vals.append(v)
            if vals:
                per_problem[(problem, method)] = float(np.median(vals))
    pis = {}
    for method in methods:
        vals = [v for (p, m), v in per_problem.items() if m == method]
        if vals:
            pis[method] = overall_pi(vals)
    return rows, per_problem, pis


def thresholds_for(curves, n=N_THRESHOLDS):
    """Thresholds from the worst starting value down to the best final value
    over all curves, spaced in log of the distance above the best."""
    finals = [c.values[-1] for c in curves]
    starts = [c.values[0] for c in curves]
    lo, hi = min(finals), max(starts)
    if hi <= lo:
        return np.array([lo])
    gaps = np.geomspace(hi - lo, max((hi - lo) * 1e-12, 1e-300), n - 1)
    return np.concatenate([lo + gaps, [lo]])


def transposed_curves(runs, problem):
    """For each method, (threshold, true evals) of the min-over-runs curve."""
    methods = sorted(m for p, m in runs if p == problem)
    curves = {}
    for m in methods:
        logs = list(runs[(problem, m)].values())
        cuts = np.unique(np.concatenate([log.counts for log in logs]).astype(float))
        curves[m] = ConvergenceLog(cuts.astype(int).tolist(), min_over_restarts(logs, cuts).tolist())
    thr = thresholds_for(list(curves.values()))
    table = []
    for m, c in curves.items():
        for t in thr:
            n = evals_to_threshold(c, t)
            if n is not None:
                table.append((m, float(t), n))
    return curves, table


def page_tests(runs, n_cuts=20):
    problems = sorted({p for p, _ in runs})
    methods = sorted({m for _, m in runs if m != BASELINE})
    out = {}
    for method in methods:
        rows = []
        for problem in problems:
            base = list(runs.get((problem, BASELINE), {}).values())
            mm = list(runs.get((problem, method), {}).values())
            if not base or not mm:
                continue
            try:
                cuts = cut_points(base + mm, n_cuts)
            except ValueError:
                continue
            rows.append(min_over_restarts(base, cuts) - min_over_restarts(mm, cuts))
        if rows:
            L, p = page_trend_test(np.asarray(rows))
            out[method] = {"L": L, "p_value": p, "rows": len(rows), "cut_points": n_cuts}
    return out


def rank_analysis(runs, alpha=0.05):
    """Friedman test and average ranks over problems; score = median final best."""
    problems = sorted({p for p, _ in runs})
    methods = sorted({m for _, m in runs})
    rows = []
    for problem in problems:
        if all((problem, m) in runs for m in methods):
            rows.append([float(np.median([log.final_best for log in runs[(problem, m)].values()]))
                         for m in methods])
    result = {"methods": methods, "problems": len(rows)}
    if len(methods) < 2 or len(rows) < 1:
        return result
    m = np.asarray(rows)
    result["average_ranks"] = average_rank_summary(m).tolist()
    if 2 <= len(methods) <= 10 and alpha in Q_ALPHA:
        result["critical_distance"] = nemenyi_cd(len(methods), len(rows), alpha)
        result["alpha"] = alpha
    if len(rows) >= 2:
        res = friedman_test(m)
        result["friedman"] = {"statistic": res.statistic, "p_value": res.p_value, "exact": res.exact}
    return result


def _plot_convergence(runs, problem, path):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for m in sorted(mm for p, mm in runs if p == problem):
        logs = list(runs[(problem, m)].values())
        cuts = np.unique(np.concatenate([log.counts for log in logs]).astype(float))
        ax.step(cuts, min_over_restarts(logs, cuts), where="post", label=m)
    ax.set_xscale("log")
    ax.set_xlabel("true evaluations")
    ax.set_ylabel("best value (min over runs)")
    ax.set_title(problem)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _plot_transposed(table, problem, path):
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for m in sorted({row[0] for row in table}):
        pts = [(t, n) for mm, t, n in table if mm == m]
        ax.plot(range(len(pts)), [n for _, n in pts], marker="o", ms=3, label=m)
    ax.set_yscale("log")
    ax.set_xlabel("threshold index (decreasing threshold)")
    ax.set_ylabel("true evaluations needed")
    ax.set_title(problem)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _plot_ranks(ranks, path):
    import matplotlib.pyplot as plt

    methods = ranks["methods"]
    avg = ranks["average_ranks"]
    order = np.argsort(avg)
    fig, ax = plt.subplots(figsize=(6, 0.4 * len(methods) + 1.2))
    ax.scatter([avg[i] for i in order], range(len(order)))
    ax.set_yticks(range(len(order)), [methods[i] for i in order])
    if "critical_distance" in ranks:
        cd = ranks["critical_distance"]
        best = avg[order[0]]
        ax.plot([best, best + cd], [-0.6, -0.6], color="k", lw=2)
        ax.text(best, -0.9, f"CD = {cd:.3f}", fontsize="small")
    ax.set_xlabel("average rank")
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name)


def _num(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def build_report(in_dir, out_dir, figures: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs, missing = discover_runs(in_dir)
    rows, per_problem, pis = speedup_tables(runs)

    with open(out / "pi_f.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["problem", "method", "run", "N", "M", "pi_f"])
        for r in rows:
            w.writerow([r["problem"], r["method"], r["run"], r["N"], r["M"], _num(r["pi_f"])])
    with open(out / "pi_problem.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["problem", "method", "median_pi_f"])
        for (p, m), v in sorted(per_problem.items()):
            w.writerow([p, m, _num(v)])
    surs = sorted({_split_method(m)[0] for m in pis})
    rels = sorted({_split_method(m)[1] for m in pis})
    with open(out / "pi_table.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["surrogate"] + rels)
        for s in surs:
            w.writerow([s] + [_num(pis[f"{s}-{r}"].pi) if f"{s}-{r}" in pis else "" for r in rels])

    transposed = {}
    problems = sorted({p for p, _ in runs})
    for problem in problems:
        curves, table = transposed_curves(runs, problem)
        transposed[problem] = table
        with open(out / f"transposed_{_safe(problem)}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "threshold", "true_evals"])
            for m, t, n in table:
                w.writerow([m, repr(float(t)), n])
        if figures:
            _plot_convergence(runs, problem, out / f"convergence_{_safe(problem)}.png")
            _plot_transposed(table, problem, out / f"transposed_{_safe(problem)}.png")

    page = page_tests(runs)
    with open(out / "page.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "L", "p_value", "rows", "cut_points"])
        for m, r in sorted(page.items()):
            w.writerow([m, _num(r["L"]), _num(r["p_value"]), r["rows"], r["cut_points"]])

    ranks = rank_analysis(runs)
    with open(out / "ranks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "average_rank"])
        for m, a in zip(ranks["methods"], ranks.get("average_ranks", [])):
            w.writerow([m, _num(a)])
    if figures and "average_ranks" in ranks:
        _plot_ranks(ranks, out / "ranks.png")

    record = {
        "problems": problems,
        "missing": missing,
        "pi": {m: {"mean_pi_f": r.mean_pi_f, "success_share": r.success_share, "pi": r.pi}
               for m, r in sorted(pis.items())},
        "median_pi_f": {f"{p}/{m}": v for (p, m), v in sorted(per_problem.items())},
        "page": page,
        "ranks": ranks,
    }
    (out / "report.json").write_text(json.dumps(record, indent=1, sort_keys=True, default=_json_default) + "\n")
    return record


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    raise TypeError(type(v))
