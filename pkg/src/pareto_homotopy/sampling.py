"""Feasibility scans, projected feasible clouds and aggregate metrics."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .nlp import OPTIMAL, ProblemEvaluator, project_to_feasible
from .problems import (
    EvalCounters,
    FeasibilityReport,
    ProblemDefinition,
    evaluate_batch,
    evaluate_objectives,
)
from .results import nondominated_indices

CLOUD_SCHEMA = "cloud-v1"
METRICS_SCHEMA = "metrics-v1"

PROJ_TOL_G = 1e-8
PROJ_TOL_H = 1e-6


@dataclass
class PointCloud:
    """Retained points as row arrays plus the generation metadata."""

    X: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def count(self) -> int:
        """Number of attempted samples."""
        return int(self.meta.get("count", 0))

    def report(self, i: int, tol_g: float = PROJ_TOL_G, tol_h: float = PROJ_TOL_H) -> FeasibilityReport:
        g, h = self.G[i], self.H[i]
        return FeasibilityReport(
            g_values=g,
            h_values=h,
            g_ok=bool(np.all(g <= tol_g)),
            h_ok=bool(np.all(np.abs(h) <= tol_h)),
            active_set=tuple(int(j) for j in np.flatnonzero(np.abs(g) <= 1e-6)),
        )

    def to_csv(self, path) -> None:
        n, p = self.X.shape[1], self.F.shape[1]
        tol_h = self.meta.get("tolerance", PROJ_TOL_H)
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: {CLOUD_SCHEMA}\n")
            writer = csv.writer(fh)
            writer.writerow([f"x{i + 1}" for i in range(n)] + [f"f{i + 1}" for i in range(p)] + ["feasible"])
            for i in range(len(self)):
                feas = bool(np.all(self.G[i] <= PROJ_TOL_G) and np.all(np.abs(self.H[i]) <= tol_h))
                writer.writerow([repr(float(v)) for v in self.X[i]] + [repr(float(v)) for v in self.F[i]] + [int(feas)])


def _box(problem: ProblemDefinition, box):
    lo, hi = problem.sampling_box if box is None else box
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if lo.shape != (problem.n,) or hi.shape != (problem.n,) or np.any(lo >= hi):
        raise ValueError("box must give lower < upper bounds of length n")
    return lo, hi


def _empty_cloud(problem, meta):
    return PointCloud(
        np.empty((0, problem.n)), np.empty((0, problem.p)), np.empty((0, problem.m)), np.empty((0, problem.s)), meta
    )


def _filter_chunk(problem, X, eps, counters):
    _, G, H = evaluate_batch(problem, X, counters, objectives=False)
    keep = np.all(G <= 0, axis=1) & np.all(np.abs(H) <= eps, axis=1)
    keep &= np.all(np.isfinite(G), axis=1) & np.all(np.isfinite(H), axis=1)
    Xk = X[keep]
    F, _, _ = evaluate_batch(problem, Xk, counters) if Xk.shape[0] else (np.empty((0, problem.p)), None, None)
    return Xk, F, G[keep], H[keep]


def _stack(problem, parts, meta):
    if not parts:
        return _empty_cloud(problem, meta)
    return PointCloud(*(np.vstack([pt[i] for pt in parts]) for i in range(4)), meta=meta)


def uniform_feasibility_scan(problem: ProblemDefinition, box=None, count: int = 200_000, eps: float = 0.01,
                             seed: int = 0, counters: EvalCounters | None = None,
                             chunk_size: int = 50_000) -> PointCloud:
    """Uniform samples kept iff ``g <= 0`` and ``|h| <= eps``.

    Each chunk draws from its own stream spawned from ``seed``, so the result
    does not depend on how chunks are scheduled.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    lo, hi = _box(problem, box)
    n_chunks = -(-count // chunk_size)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    parts = []
    for c, ss in enumerate(streams):
        k = min(chunk_size, count - c * chunk_size)
        X = np.random.default_rng(ss).uniform(lo, hi, size=(k, problem.n))
        parts.append(_filter_chunk(problem, X, eps, counters))
    meta = {"method": "uniform-filter", "box": (lo.tolist(), hi.tolist()), "count": count,
            "tolerance": eps, "seed": seed}
    return _stack(problem, parts, meta)


def grid_feasibility_scan(problem: ProblemDefinition, box=None, shape=(4000, 4000), eps: float = 0.01,
                          counters: EvalCounters | None = None, chunk_size: int = 1_000_000) -> PointCloud:
    """Same filter as the uniform scan over a tensor grid including the box corners."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    lo, hi = _box(problem, box)
    shape = tuple(int(k) for k in shape)
    if len(shape) != problem.n or min(shape) < 1:
        raise ValueError("grid shape must give a positive count per coordinate")
    axes = [np.linspace(lo[i], hi[i], shape[i]) for i in range(problem.n)]
    total = int(np.prod(shape))
    parts = []
    for start in range(0, total, chunk_size):
        idx = np.unravel_index(np.arange(start, min(total, start + chunk_size)), shape)
        X = np.column_stack([axes[i][idx[i]] for i in range(problem.n)])
        parts.append(_filter_chunk(problem, X, eps, counters))
    meta = {"method": "grid", "box": (lo.tolist(), hi.tolist()), "count": total, "shape": list(shape),
            "tolerance": eps, "seed": None}
    return _stack(problem, parts, meta)


def projected_cloud(problem: ProblemDefinition, box=None, count: int = 1000, seed: int = 0,
                    counters: EvalCounters | None = None, parallel: bool = False,
                    max_workers: int | None = None) -> PointCloud:
    """Project uniform samples onto the feasible set and keep the clean results."""
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = _box(problem, box)
    starts = np.random.default_rng(seed).uniform(lo, hi, size=(count, problem.n))

    def one(x):
        run = EvalCounters.zeros(problem.p)
        res = project_to_feasible(problem, x, ev=ProblemEvaluator(problem, run))
        return res, run

    if parallel:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, starts))
    else:
        results = [one(x) for x in starts]

    keep, failures = [], 0
    for res, run in results:
        if counters is not None:
            counters.merge(run)
        if res.status == OPTIMAL and res.ineq_violation <= PROJ_TOL_G and res.eq_violation <= PROJ_TOL_H:
            keep.append(res.x_star)
        else:
            failures += 1
    meta = {"method": "projection", "box": (lo.tolist(), hi.tolist()), "count": count,
            "tolerance": PROJ_TOL_H, "seed": seed, "failures": failures}
    if not keep:
        return _empty_cloud(problem, meta)
    X = np.array(keep)
    F, G, H = evaluate_batch(problem, X, counters)
    return PointCloud(X, F, G, H, meta)


def nondominance_filter(points, tol: float = 0.0) -> list:
    """Indices of the points no other point dominates (with tolerance ``tol``)."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return []
    return nondominated_indices(np.atleast_2d(pts), tol)


def dominating_points(cloud_F, f, tol: float = 1e-3) -> np.ndarray:
    """Indices of cloud points that dominate ``f`` by more than ``tol``."""
    F = np.asarray(cloud_F, dtype=float)
    f = np.asarray(f, dtype=float)
    if F.size == 0:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(np.all(F <= f + tol, axis=1) & np.any(F < f - tol, axis=1))


@dataclass
class MetricsRow:
    method: str
    wall_time: float
    counters: EvalCounters
    summary: dict = field(default_factory=dict)
    runs: int = 1

    @property
    def objective_evaluations(self) -> int:
        return self.counters.max_objective

    @property
    def effective_evaluations(self) -> int:
        """Objective count, or for homotopy runs the map-plus-Jacobian count if larger."""
        c = self.counters
        return max(c.max_objective, c.homotopy_map + c.homotopy_jacobian)


def metrics_report(reports) -> list:
    """One row per method in first-seen order; counters and times are summed."""
    rows = {}
    for rep in reports:
        row = rows.get(rep.method)
        if row is None:
            rows[rep.method] = MetricsRow(rep.method, float(rep.wall_time), rep.counters.copy(), {}, 1)
            row = rows[rep.method]
        else:
            row.wall_time += float(rep.wall_time)
            row.counters.merge(rep.counters)
            row.runs += 1
        row.summary = {
            "status": rep.status,
            "f": None if rep.f is None else np.asarray(rep.f).tolist(),
            "kkt_residual": rep.kkt_residual,
            "feasible": rep.feasible,
        }
    return list(rows.values())


def write_metrics_csv(rows, path) -> None:
    """Columns: method, runs, wall_time, f-counts, constraints, gradients, hessians, H, DH, kkt_residual, status."""
    p = max((len(r.counters.f) for r in rows), default=0)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {METRICS_SCHEMA}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "runs", "wall_time"]
            + [f"f{i + 1}_evals" for i in range(p)]
            + ["constraint_evals", "gradient_evals", "hessian_evals", "homotopy_map_evals",
               "homotopy_jacobian_evals", "kkt_residual", "status"]
        )
        for r in rows:
            c = r.counters
            fs = list(c.f) + [0] * (p - len(c.f))
            kkt = r.summary.get("kkt_residual")
            writer.writerow(
                [r.method, r.runs, f"{r.wall_time:.6f}"]
                + fs
                + [c.constraints, c.gradients, c.hessians, c.homotopy_map, c.homotopy_jacobian,
                   "" if kkt is None or not np.isfinite(kkt) else repr(float(kkt)), r.summary.get("status", "")]
            )


class Timer:
    """Monotonic wall-clock timer for ``with`` blocks."""

    def __enter__(self):
        self.start = time.perf_counter()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def sample_objectives(problem, X, counters=None):
    return np.array([evaluate_objectives(problem, x, counters) for x in X])
