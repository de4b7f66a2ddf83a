"""Command-line front end: solve, front, sample, bench, check."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .nsga2 import GaConfig, nsga2_solve, run_nsga2
from .problems import EvalCounters, UnknownProblemError, as_vector, get_problem, list_problems
from .results import AllRunsFailedError, front_from_reports
from .sampling import grid_feasibility_scan, projected_cloud, uniform_feasibility_scan
from .scalarization import (
    EpsilonGrid,
    WeightGrid,
    epsilon_constraint_front,
    epsilon_constraint_solve,
    global_criterion_solve,
    lexicographic_solve,
    weighted_sum_front,
    weighted_sum_solve,
)
from .tracker import TrackerConfig, homotopy_solve, pareto_front_homotopy

OUT_ENV = "PARETO_HOMOTOPY_OUT"
METHODS = ("homotopy", "wsm", "ecm", "gcm", "lex", "nsga2")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("pareto_homotopy")


class UsageError(Exception):
    pass


def _vec(text, name, length=None):
    if text is None:
        return None
    try:
        v = as_vector(text)
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if length is not None and v.size != length:
        raise UsageError(f"--{name}: expected {length} values, got {v.size}")
    return v


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ga_config(args, problem) -> GaConfig:
    preset = dict(problem.presets.get("nsga2", {}))
    for key in ("pop_size", "generations", "delta_h"):
        val = getattr(args, key, None)
        if val is not None:
            preset[key] = val
    try:
        return GaConfig(**preset, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _tracker_config(args) -> TrackerConfig:
    return TrackerConfig(corrector_iters=args.corrector_iters) if args.corrector_iters else TrackerConfig.iterated_mode()


def _eps_vector(args, problem):
    if args.eps is None:
        return np.asarray(problem.presets.get("ecm_eps", [np.nan] * problem.p), dtype=float)
    eps = _vec(args.eps, "eps", problem.p)
    return eps


# --- commands ---------------------------------------------------------------


def cmd_solve(args) -> int:
    problem = get_problem(args.problem)
    w = _vec(args.w, "w", problem.p)
    x0 = _vec(args.x0, "x0", problem.n)
    u0 = _vec(args.u0, "u0", problem.m)
    w = problem.weights if w is None else w
    method = args.method
    if method == "homotopy":
        if np.any(w <= 0):
            raise UsageError("--w: homotopy weights must be strictly positive")
        rep = homotopy_solve(problem, w, x0=problem.anchor_x0 if x0 is None else x0, u0=u0, cfg=_tracker_config(args))
    elif method == "wsm":
        rep = weighted_sum_solve(problem, w / w.sum(), x0)
    elif method == "ecm":
        rep = epsilon_constraint_solve(problem, args.primary - 1, _eps_vector(args, problem), x0)
    elif method == "gcm":
        rep = global_criterion_solve(problem, x0, norm_p=args.norm_p,
                                     weights=None if args.w is None else w, scales=args.scales)
    elif method == "lex":
        order = _vec(args.order, "order", problem.p)
        order = None if order is None else [int(k) - 1 for k in order]
        try:
            rep = lexicographic_solve(problem, order, tol_lex=args.tol_lex, x0=x0)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        rep = nsga2_solve(problem, _ga_config(args, problem))

    out = _outdir(args)
    stem = f"solve_{problem.name}_{method}"
    if args.format == "json":
        path = out / f"{stem}.json"
        rep.to_json(path)
    else:
        path = out / f"{stem}.csv"
        bench_mod.write_solutions_csv([rep], path)
    summary = {"status": rep.status, "f": None if rep.f is None else rep.f.tolist(),
               "kkt_residual": rep.to_dict()["kkt_residual"], "feasible": rep.feasible, "output": str(path)}
    print(json.dumps(summary))
    return EXIT_OK if rep.ok else EXIT_SOLVER


def cmd_front(args) -> int:
    problem = get_problem(args.problem)
    x0 = _vec(args.x0, "x0", problem.n)
    counters = EvalCounters.zeros(problem.p)
    method = args.method
    try:
        if method in ("homotopy", "wsm"):
            if args.weights_count < 1:
                raise UsageError("--weights-count must be >= 1")
            grid = WeightGrid.uniform(args.weights_count, problem.p)
            if method == "homotopy":
                reports = pareto_front_homotopy(problem, list(grid), x0=problem.anchor_x0 if x0 is None else x0,
                                                cfg=_tracker_config(args), counters=counters, parallel=args.parallel)
                front = front_from_reports(problem, reports)
            else:
                front = weighted_sum_front(problem, grid, x0, counters, parallel=args.parallel)
        elif method == "ecm":
            if args.eps_grid:
                values = _vec(args.eps_grid, "eps-grid")
                if values.size < 1:
                    raise UsageError("--eps-grid is empty")
                if problem.p != 2:
                    raise UsageError("--eps-grid lists bounds for the second objective of a bi-objective problem")
                grid = EpsilonGrid(0, tuple(np.array([np.nan, e]) for e in values))
            else:
                if args.eps_count < 1:
                    raise UsageError("--eps-count must be >= 1")
                cloud = projected_cloud(problem, count=args.cloud_count, seed=args.seed)
                grid = EpsilonGrid.from_cloud(cloud.F, 0, args.eps_count)
            front = epsilon_constraint_front(problem, grid, x0, counters, parallel=args.parallel)
        elif method == "nsga2":
            front = run_nsga2(problem, _ga_config(args, problem), counters).front
        else:
            raise UsageError(f"front does not support method {method!r}")
    except AllRunsFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if args.filter:
        front = front.nondominated(args.filter_tol)
    out = _outdir(args)
    path = out / f"front_{problem.name}_{method}.csv"
    front.to_csv(path)
    with open(out / f"front_{problem.name}_{method}_counters.json", "w") as fh:
        json.dump({"total": counters.as_dict(),
                   "runs": [{"params": r.to_dict()["params"], "status": r.status, "counters": r.counters.as_dict()}
                            for r in front.reports]}, fh, indent=2)
    for note in front.notes:
        log.warning(note)
    print(json.dumps({"rows": len(front), "failed": len(front.notes), "output": str(path)}))
    if method == "homotopy" and not front.entries:
        return EXIT_SOLVER
    return EXIT_OK


def cmd_sample(args) -> int:
    problem = get_problem(args.problem)
    out = _outdir(args)
    written = []
    if args.mode == "grid":
        try:
            shape = tuple(int(k) for k in args.grid.lower().split("x"))
        except ValueError:
            raise UsageError("--grid expects a shape such as 4000x4000") from None
        if len(shape) != problem.n or min(shape) < 1:
            raise UsageError(f"--grid needs {problem.n} positive counts")
    elif args.count < 1:
        raise UsageError("--count must be >= 1")
    if args.mode == "projection":
        cloud = projected_cloud(problem, count=args.count, seed=args.seed, parallel=args.parallel)
        path = out / f"cloud_{problem.name}_projection.csv"
        cloud.to_csv(path)
        written.append({"file": str(path), "retained": len(cloud), "count": cloud.count})
    else:
        eps_values = _vec(args.eps, "eps") if args.eps else np.array([0.01, 0.1, 1.0])
        if np.any(eps_values <= 0):
            raise UsageError("--eps values must be positive")
        for eps in eps_values:
            if args.mode == "scan":
                cloud = uniform_feasibility_scan(problem, count=args.count, eps=float(eps), seed=args.seed)
            else:
                cloud = grid_feasibility_scan(problem, shape=shape, eps=float(eps))
            path = out / f"cloud_{problem.name}_{args.mode}_eps{eps:g}.csv"
            cloud.to_csv(path)
            written.append({"file": str(path), "eps": float(eps), "retained": len(cloud), "count": cloud.count})
    print(json.dumps(written))
    return EXIT_OK


def cmd_bench(args) -> int:
    names = list_problems() if args.problem == "all" else [args.problem]
    status = EXIT_OK
    for name in names:
        get_problem(name)
        result = bench_mod.run_bench(name, cloud_count=args.cloud_count, seed=args.seed)
        files = result.write(_outdir(args))
        for rep in result.reports:
            f = "-" if rep.f is None else "(" + ", ".join(f"{v:.4f}" for v in rep.f) + ")"
            print(f"{name:8s} {rep.method:9s} {rep.status:7s} f={f}")
        print(json.dumps({"problem": name, **files, "serial_parallel_counters_match": result.serial_parallel_match}))
        if any(not rep.ok for rep in result.reports):
            status = EXIT_SOLVER
    return status


def cmd_check(args) -> int:
    cells = bench_mod.literature_check(tol=args.tol)
    for cell in cells:
        print(cell.line())
    failed = sum(not c.passed for c in cells)
    print(f"{len(cells) - failed}/{len(cells)} cells pass")
    return EXIT_OK if failed == 0 else EXIT_SOLVER


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pareto-homotopy", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--problem", default="ex2_5d", help="registered problem: " + ", ".join(list_problems()))
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        if seed:
            p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("solve", help="run one method once")
    common(p)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--w", help="weights, e.g. 0.4,0.6")
    p.add_argument("--x0", help="start point")
    p.add_argument("--u0", help="homotopy inequality multipliers at the anchor")
    p.add_argument("--eps", help="epsilon bounds, one per objective; the primary entry is ignored (nan)")
    p.add_argument("--primary", type=int, default=1, help="1-based primary objective for ecm")
    p.add_argument("--norm-p", type=float, default=2.0)
    p.add_argument("--scales", choices=("range", "unit"), default="range")
    p.add_argument("--order", help="1-based priority order for lex, e.g. 2,1")
    p.add_argument("--tol-lex", type=float, default=1e-6)
    p.add_argument("--corrector-iters", type=int, help="1 = single correction per step")
    p.add_argument("--pop-size", dest="pop_size", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--delta-h", dest="delta_h", type=float)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("front", help="sweep weights or epsilon bounds")
    common(p)
    p.add_argument("--method", choices=("homotopy", "wsm", "ecm", "nsga2"), required=True)
    p.add_argument("--weights-count", type=int, default=50)
    p.add_argument("--eps-grid", help="bounds on f2 for ecm, e.g. -2,-1,0")
    p.add_argument("--eps-count", type=int, default=20)
    p.add_argument("--cloud-count", type=int, default=1000)
    p.add_argument("--x0")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--filter", action="store_true", help="drop dominated rows")
    p.add_argument("--filter-tol", type=float, default=1e-6)
    p.add_argument("--corrector-iters", type=int)
    p.add_argument("--pop-size", dest="pop_size", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--delta-h", dest="delta_h", type=float)
    p.add_argument("--format", choices=("csv",), default="csv")
    p.set_defaults(func=cmd_front)

    p = sub.add_parser("sample", help="feasibility scans and projected clouds")
    common(p)
    p.add_argument("--mode", choices=("scan", "grid", "projection"), default="scan")
    p.add_argument("--count", type=int, default=200_000)
    p.add_argument("--eps", help="tolerances, e.g. 0.01,0.1,1")
    p.add_argument("--grid", default="4000x4000")
    p.add_argument("--parallel", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("bench", help="all methods with registered defaults")
    p.add_argument("--problem", default="all")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0, help="seed of the projected cloud")
    p.add_argument("--cloud-count", type=int, default=1000)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="verify the tabulated literature points")
    p.add_argument("--tol", type=float, default=bench_mod.CHECK_TOL)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and on usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, UnknownProblemError) as exc:
        msg = exc.args[0] if isinstance(exc, UnknownProblemError) else str(exc)
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
