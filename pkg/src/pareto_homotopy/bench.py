"""Benchmark harness: all six methods on one problem, plus the literature check."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .nsga2 import GaConfig, nsga2_solve
from .problems import EvalCounters, ProblemDefinition, evaluate_constraints, evaluate_objectives, get_problem
from .results import SolveReport
from .sampling import metrics_report, projected_cloud, write_metrics_csv
from .scalarization import (
    epsilon_constraint_solve,
    global_criterion_solve,
    ideal_point,
    lexicographic_solve,
    weighted_sum_solve,
)
from .tracker import TrackerConfig, homotopy_solve, pareto_front_homotopy

SOLUTIONS_SCHEMA = "solutions-v1"
METHODS = ("homotopy", "wsm", "ecm", "gcm", "lex", "nsga2")
DETERMINISTIC = ("homotopy", "wsm", "ecm", "gcm", "lex")

# Candidate points for ex2_5d with their tabulated f1, f2, h1, h2, g and
# feasibility label.  Coordinates are given to four decimals only.
LITERATURE_POINTS = (
    {
        "name": "shang",
        "x": (0.3077, 0.5374, -0.2703, -0.1336, 0.2804),
        "values": {"f1": 0.5530, "f2": 2.0873, "h1": -0.1011, "h2": 0.0, "g": -9.5256},
        "label": "Partially",
    },
    {
        "name": "zhao",
        "x": (-1.3074, -2.8605, -1.0470, 0.4103, 0.4475),
        "values": {"f1": 11.3566, "f2": -9.2942, "h1": 1.08e-4, "h2": -7.7391, "g": 1.1563},
        "label": "No",
    },
    {
        "name": "proposed",
        "x": (0.3214, 0.5131, -0.2773, -0.1405, 0.3048),
        "values": {"f1": 0.5561, "f2": 2.0819, "h1": -2.0e-4, "h2": 0.0, "g": -9.5368},
        "label": "Yes",
    },
)
CHECK_TOL = 1e-3


@dataclass
class CheckCell:
    point: str
    quantity: str
    expected: object
    actual: object
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if isinstance(self.expected, str):
            return f"{status} {self.point:9s} {self.quantity:11s} expected={self.expected} actual={self.actual}"
        return (f"{status} {self.point:9s} {self.quantity:11s} expected={self.expected:+.4f} "
                f"actual={self.actual:+.6f} |diff|={abs(self.actual - self.expected):.1e}")


def feasibility_label(g, h, tol: float = CHECK_TOL) -> str:
    """``Yes`` when every constraint holds, ``No`` when an inequality fails,
    ``Partially`` when only some equalities fail.  ``tol`` absorbs the
    four-decimal rounding of tabulated coordinates."""
    if np.any(np.asarray(g) > tol):
        return "No"
    if np.any(np.abs(np.asarray(h)) > tol):
        return "Partially"
    return "Yes"


def literature_check(problem: ProblemDefinition | None = None, tol: float = CHECK_TOL) -> list:
    problem = problem or get_problem("ex2_5d")
    cells = []
    for pt in LITERATURE_POINTS:
        x = np.asarray(pt["x"], dtype=float)
        f = evaluate_objectives(problem, x)
        g, h = evaluate_constraints(problem, x)
        actual = {"f1": f[0], "f2": f[1], "h1": h[0], "h2": h[1], "g": g[0]}
        for key, expected in pt["values"].items():
            val = float(actual[key])
            cells.append(CheckCell(pt["name"], key, expected, val, abs(val - expected) <= tol))
        label = feasibility_label(g, h)
        cells.append(CheckCell(pt["name"], "feasibility", pt["label"], label, label == pt["label"]))
    return cells


@dataclass
class BenchResult:
    problem: str
    reports: list
    rows: list = field(default_factory=list)
    serial_parallel_match: bool | None = None

    def report(self, method: str) -> SolveReport:
        for rep in self.reports:
            if rep.method == method:
                return rep
        raise KeyError(method)

    def objective_ratio(self) -> dict:
        """NSGA-II objective evaluations over each deterministic method's count."""
        rows = {r.method: r for r in self.rows}
        ga = rows["nsga2"].objective_evaluations
        return {m: ga / max(1, rows[m].effective_evaluations) for m in DETERMINISTIC if m in rows}

    def write(self, outdir) -> dict:
        from pathlib import Path

        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        metrics = out / f"{self.problem}_metrics.csv"
        solutions = out / f"{self.problem}_solutions.csv"
        write_metrics_csv(self.rows, metrics)
        write_solutions_csv(self.reports, solutions)
        return {"metrics": str(metrics), "solutions": str(solutions)}


def write_solutions_csv(reports, path) -> None:
    """Columns: method, status, x*, f*, g*, h*, kkt_residual, feasible, params."""
    dims = next(((len(r.x), len(r.f), len(r.g), len(r.h)) for r in reports if r.x is not None), (0, 0, 0, 0))
    n, p, m, s = dims
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {SOLUTIONS_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "status"]
            + [f"x{i + 1}" for i in range(n)]
            + [f"f{i + 1}" for i in range(p)]
            + [f"g{i + 1}" for i in range(m)]
            + [f"h{i + 1}" for i in range(s)]
            + ["kkt_residual", "feasible", "params"]
        )
        for r in reports:
            def cells(v, k):
                return [""] * k if v is None else [repr(float(a)) for a in v]

            kkt = "" if not np.isfinite(r.kkt_residual) else repr(float(r.kkt_residual))
            writer.writerow(
                [r.method, r.status] + cells(r.x, n) + cells(r.f, p) + cells(r.g, m) + cells(r.h, s)
                + [kkt, int(r.feasible), json.dumps(r.to_dict()["params"], sort_keys=True)]
            )


def _safe(method, problem, fn):
    import time

    started = time.perf_counter()
    try:
        return fn()
    except Exception as exc:  # keep the bench running; the failure shows in the table
        return SolveReport.failure(method, problem.name, {}, f"{type(exc).__name__}: {exc}",
                                   EvalCounters.zeros(problem.p), time.perf_counter() - started)


def run_bench(problem_name: str, methods=METHODS, cloud_count: int = 1000, seed: int = 0,
              ga_config: GaConfig | None = None, check_parallel: bool = True,
              tracker_config: TrackerConfig | None = None) -> BenchResult:
    """Run each method once with the registered defaults.

    The global criterion shares one projected cloud for its scales; the
    cloud's own evaluations are not charged to any method.
    """
    problem = get_problem(problem_name)
    w = problem.weights
    cfg = tracker_config or TrackerConfig.iterated_mode()
    reports = []
    for method in methods:
        if method == "homotopy":
            rep = _safe(method, problem, lambda: homotopy_solve(problem, w, x0=problem.anchor_x0, cfg=cfg))
        elif method == "wsm":
            rep = _safe(method, problem, lambda: weighted_sum_solve(problem, w))
        elif method == "ecm":
            eps = np.asarray(problem.presets.get("ecm_eps", [np.nan] * problem.p), dtype=float)
            rep = _safe(method, problem, lambda: epsilon_constraint_solve(problem, 0, eps))
        elif method == "gcm":

            def gcm():
                cloud = projected_cloud(problem, count=cloud_count, seed=seed)
                run = EvalCounters.zeros(problem.p)
                ideal = ideal_point(problem, counters=run, cloud=cloud)
                rep = global_criterion_solve(problem, weights=w, norm_p=1, scales="unit", ideal=ideal)
                rep.counters.merge(run)
                return rep

            rep = _safe(method, problem, gcm)
        elif method == "lex":
            rep = _safe(method, problem, lambda: lexicographic_solve(problem))
        elif method == "nsga2":
            ga = ga_config or GaConfig(**{**problem.presets.get("nsga2", {}), "seed": 42})
            rep = _safe(method, problem, lambda: nsga2_solve(problem, ga))
        else:
            raise ValueError(f"unknown method {method!r}")
        reports.append(rep)

    result = BenchResult(problem.name, reports, metrics_report(reports))
    if check_parallel and "homotopy" in methods:
        serial, parallel = EvalCounters.zeros(problem.p), EvalCounters.zeros(problem.p)
        pareto_front_homotopy(problem, [w], x0=problem.anchor_x0, cfg=cfg, counters=serial)
        pareto_front_homotopy(problem, [w], x0=problem.anchor_x0, cfg=cfg, counters=parallel, parallel=True)
        result.serial_parallel_match = serial == parallel
    return result
