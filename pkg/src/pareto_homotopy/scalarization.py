"""Deterministic scalarization baselines: weighted sum, epsilon-constraint,
global criterion and lexicographic ordering."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .nlp import OPTIMAL, NlpResult, ProblemEvaluator, minimize_constrained, problem_spec
from .problems import EvalCounters, ProblemDefinition, feasibility_report
from .results import AllRunsFailedError, FrontSet, SolveReport, front_from_reports

FRONT_TOL_G = 1e-6
FRONT_TOL_H = 1e-5


class StageInfeasibleError(RuntimeError):
    def __init__(self, stage: int, objective: int, result: NlpResult):
        super().__init__(f"lexicographic stage {stage} (objective f{objective + 1}) is infeasible: {result.status}")
        self.stage = stage
        self.objective = objective
        self.result = result


class IdealPointError(RuntimeError):
    def __init__(self, component: int, result: NlpResult):
        super().__init__(f"could not minimize f{component + 1} over the feasible set ({result.status})")
        self.component = component
        self.result = result


@dataclass(frozen=True)
class WeightGrid:
    weights: tuple

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        if not ws:
            raise ValueError("weight grid is empty")
        p = ws[0].size
        for w in ws:
            if w.shape != (p,):
                raise ValueError("weights must share one length")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"weight {w.tolist()} is not on the simplex")
        object.__setattr__(self, "weights", ws)

    @classmethod
    def uniform(cls, count: int, p: int = 2) -> "WeightGrid":
        """``count`` strictly positive bi-objective weights evenly spaced in (0, 1)."""
        if count < 1:
            raise ValueError("count must be >= 1")
        if p != 2:
            raise ValueError("uniform grids are provided for two objectives only")
        w1 = np.linspace(0.0, 1.0, count + 2)[1:-1]
        return cls(tuple(np.array([a, 1.0 - a]) for a in w1))

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)


@dataclass(frozen=True)
class EpsilonGrid:
    """Bounds ``f_k <= eps_k`` for ``k != primary``; the primary entry is ignored."""

    primary: int
    eps: tuple

    def __post_init__(self):
        vs = tuple(np.asarray(e, dtype=float) for e in self.eps)
        if not vs:
            raise ValueError("epsilon grid is empty")
        p = vs[0].size
        if not 0 <= self.primary < p:
            raise ValueError("primary objective index out of range")
        if any(v.shape != (p,) for v in vs):
            raise ValueError("epsilon vectors must share one length")
        object.__setattr__(self, "eps", vs)

    @classmethod
    def from_cloud(cls, F, primary: int = 0, count: int = 20) -> "EpsilonGrid":
        """Evenly spaced bounds between each constrained objective's cloud min and max."""
        F = np.asarray(F, dtype=float)
        p = F.shape[1]
        cols = []
        for k in range(p):
            if k == primary:
                cols.append(np.full(count, np.nan))
            else:
                cols.append(np.linspace(F[:, k].min(), F[:, k].max(), count))
        return cls(primary, tuple(np.array(row) for row in np.column_stack(cols)))

    def __len__(self) -> int:
        return len(self.eps)


# --- report plumbing --------------------------------------------------------


def _report(method, problem, params, ev, res: NlpResult, counters, started, extra=None) -> SolveReport:
    x = res.x_star
    f = ev.f(x)
    g, h = ev.gh(x)
    rep = feasibility_report(problem, x, tol_g=FRONT_TOL_G, tol_h=FRONT_TOL_H)
    return SolveReport(
        method=method,
        problem=problem.name,
        params=params,
        x=x,
        f=f,
        g=g,
        h=h,
        kkt_residual=res.kkt_residual,
        feasible=rep.feasible,
        counters=counters,
        wall_time=time.perf_counter() - started,
        status="ok" if res.status == OPTIMAL and rep.feasible else "failed",
        message=res.status,
        extra={"u": res.u, "v": res.v, "nlp_iterations": res.iterations, **(extra or {})},
    )


def _x0(problem, x0):
    return problem.x0.copy() if x0 is None else np.asarray(x0, dtype=float)


def _finish(run, counters):
    if counters is not None:
        counters.merge(run)


def _front(problem, solver, params_list, counters, parallel, max_workers):
    if parallel:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(solver, params_list))
    else:
        reports = [solver(q) for q in params_list]
    for rep in reports:
        _finish(rep.counters, counters)
    fs = front_from_reports(problem, reports, FRONT_TOL_G, FRONT_TOL_H)
    if not fs.entries:
        raise AllRunsFailedError("every run of the sweep failed", reports)
    return fs


# --- weighted sum -----------------------------------------------------------


def weighted_sum_solve(problem: ProblemDefinition, w, x0=None, counters: EvalCounters | None = None,
                       **options) -> SolveReport:
    """Minimize ``sum_i w_i f_i`` over the feasible set."""
    started = time.perf_counter()
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.p,) or np.any(w < 0):
        raise ValueError("weights must be a nonnegative vector of length p")
    run = EvalCounters.zeros(problem.p)
    ev = ProblemEvaluator(problem, run)
    x0 = _x0(problem, x0)

    def hess(x):
        hs = ev.hess(x)
        return sum(wi * H for wi, H in zip(w, hs.f))

    spec = problem_spec(ev, x0, lambda x: float(w @ ev.f(x)), lambda x: w @ ev.jac(x)[0], hess, **options)
    res = minimize_constrained(spec)
    rep = _report("wsm", problem, {"w": w.tolist(), "x0": x0.tolist()}, ev, res, run, started)
    _finish(run, counters)
    return rep


def weighted_sum_front(problem: ProblemDefinition, grid: WeightGrid, x0=None, counters: EvalCounters | None = None,
                       parallel: bool = False, max_workers: int | None = None) -> FrontSet:
    return _front(problem, lambda w: weighted_sum_solve(problem, w, x0), list(grid), counters, parallel, max_workers)


# --- epsilon-constraint -----------------------------------------------------


def epsilon_constraint_solve(problem: ProblemDefinition, primary: int, eps, x0=None,
                             counters: EvalCounters | None = None, **options) -> SolveReport:
    """Minimize ``f_primary`` subject to ``f_k <= eps_k`` for the other objectives.

    Non-finite bounds drop the matching constraint.
    """
    started = time.perf_counter()
    eps = np.asarray(eps, dtype=float)
    if not 0 <= primary < problem.p or eps.shape != (problem.p,):
        raise ValueError("primary index or epsilon vector does not match the problem")
    run = EvalCounters.zeros(problem.p)
    ev = ProblemEvaluator(problem, run)
    x0 = _x0(problem, x0)
    extra = []
    for k in range(problem.p):
        if k == primary or not np.isfinite(eps[k]):
            continue
        extra.append((
            lambda x, k=k: ev.f(x)[k] - eps[k],
            lambda x, k=k: ev.jac(x)[0][k],
            lambda x, k=k: ev.hess(x).f[k],
        ))
    spec = problem_spec(
        ev, x0,
        lambda x: float(ev.f(x)[primary]),
        lambda x: ev.jac(x)[0][primary],
        lambda x: ev.hess(x).f[primary],
        extra_ineq=extra,
        **options,
    )
    res = minimize_constrained(spec)
    params = {"primary": primary, "eps": [None if not np.isfinite(e) or k == primary else float(e)
                                          for k, e in enumerate(eps)], "x0": x0.tolist()}
    rep = _report("ecm", problem, params, ev, res, run, started)
    if res.status != OPTIMAL and res.status == "infeasible":
        rep.status = "infeasible"
    _finish(run, counters)
    return rep


def epsilon_constraint_front(problem: ProblemDefinition, grid: EpsilonGrid, x0=None,
                             counters: EvalCounters | None = None, parallel: bool = False,
                             max_workers: int | None = None) -> FrontSet:
    return _front(problem, lambda e: epsilon_constraint_solve(problem, grid.primary, e, x0), list(grid.eps),
                  counters, parallel, max_workers)


# --- ideal point and global criterion ---------------------------------------


def _minimize_component(problem, i, starts, ev):
    best = None
    for x0 in starts:
        spec = problem_spec(
            ev, x0,
            lambda x: float(ev.f(x)[i]),
            lambda x: ev.jac(x)[0][i],
            lambda x: ev.hess(x).f[i],
        )
        res = minimize_constrained(spec)
        if res.status == OPTIMAL and (best is None or res.objective < best.objective):
            best = res
        elif best is None and res.status != OPTIMAL:
            last = res
    if best is None:
        raise IdealPointError(i, last)
    return best


def ideal_point(problem: ProblemDefinition, x0=None, counters: EvalCounters | None = None, cloud=None,
                cloud_size: int = 1000, seed: int = 0):
    """Per-objective minima over the feasible set and per-objective scales.

    Each minimum is sought from ``x0`` and from the cloud point that is best
    in that objective; scales are the objective ranges over the cloud.
    """
    run = EvalCounters.zeros(problem.p)
    ev = ProblemEvaluator(problem, run)
    if cloud is None:
        from .sampling import projected_cloud

        cloud = projected_cloud(problem, count=cloud_size, seed=seed, counters=run)
    x0 = _x0(problem, x0)
    f_star = np.empty(problem.p)
    for i in range(problem.p):
        starts = [x0]
        if len(cloud):
            starts.append(cloud.X[int(np.argmin(cloud.F[:, i]))])
        f_star[i] = _minimize_component(problem, i, starts, ev).objective
    if len(cloud):
        scales = cloud.F.max(axis=0) - cloud.F.min(axis=0)
        scales[scales <= 0] = 1.0
    else:
        scales = np.ones(problem.p)
    _finish(run, counters)
    return f_star, scales


def global_criterion_solve(problem: ProblemDefinition, x0=None, norm_p: float = 2.0, counters=None,
                           weights=None, scales="range", ideal=None, cloud=None, **options) -> SolveReport:
    """Minimize the (weighted, scaled) ``L_p`` distance to the ideal point.

    ``scales`` is ``"range"`` (cloud ranges), ``"unit"`` or an explicit
    vector.  ``ideal`` may pass a precomputed ``(f_star, scales)`` pair.
    The ``p``-th power of the distance is minimized; it has the same
    minimizers and is smooth at the ideal point for ``p >= 1``.
    """
    if norm_p < 1:
        raise ValueError("norm_p must be >= 1")
    started = time.perf_counter()
    run = EvalCounters.zeros(problem.p)
    if ideal is None:
        ideal = ideal_point(problem, x0, run, cloud=cloud)
    f_star, cloud_scales = (np.asarray(a, dtype=float) for a in ideal)
    if isinstance(scales, str):
        if scales == "range":
            s = cloud_scales
        elif scales == "unit":
            s = np.ones(problem.p)
        else:
            raise ValueError(f"unknown scaling {scales!r}")
    else:
        s = np.asarray(scales, dtype=float)
    lam = np.ones(problem.p) if weights is None else np.asarray(weights, dtype=float)
    c = lam / s**norm_p
    q = float(norm_p)

    ev = ProblemEvaluator(problem, run)
    x0 = _x0(problem, x0)

    if q == 1.0:
        # f >= f_star on the feasible set, so the absolute value is dropped
        obj = lambda x: float(c @ (ev.f(x) - f_star))  # noqa: E731
        grad = lambda x: c @ ev.jac(x)[0]  # noqa: E731

        def hess(x):
            return sum(ci * H for ci, H in zip(c, ev.hess(x).f))
    else:

        def obj(x):
            return float(c @ np.abs(ev.f(x) - f_star) ** q)

        def grad(x):
            d = ev.f(x) - f_star
            return (c * q * np.abs(d) ** (q - 1) * np.sign(d)) @ ev.jac(x)[0]

        hess = None
        if q >= 2:

            def hess(x):
                d = ev.f(x) - f_star
                Jf = ev.jac(x)[0]
                hs = ev.hess(x)
                W = np.zeros((problem.n, problem.n))
                for i in range(problem.p):
                    W += c[i] * q * (q - 1) * abs(d[i]) ** (q - 2) * np.outer(Jf[i], Jf[i])
                    W += c[i] * q * abs(d[i]) ** (q - 1) * np.sign(d[i]) * hs.f[i]
                return W

    spec = problem_spec(ev, x0, obj, grad, hess, **options)
    res = minimize_constrained(spec)
    params = {"norm_p": q, "weights": lam.tolist(), "scales": s.tolist(), "ideal": f_star.tolist(),
              "x0": x0.tolist()}
    rep = _report("gcm", problem, params, ev, res, run, started)
    rep.extra["distance"] = obj(res.x_star) ** (1.0 / q) if obj(res.x_star) > 0 else 0.0
    _finish(run, counters)
    return rep


# --- lexicographic ----------------------------------------------------------


def lexicographic_solve(problem: ProblemDefinition, priority_order=None, tol_lex: float = 1e-6, x0=None,
                        counters: EvalCounters | None = None, **options) -> SolveReport:
    """Minimize objectives one after another (``priority_order`` is 0-based).

    Earlier optima are kept as relaxed bounds ``f_k <= f_k* + tol_lex``.
    """
    if tol_lex <= 0:
        raise ValueError("tol_lex must be positive")
    order = list(range(problem.p)) if priority_order is None else [int(k) for k in priority_order]
    if sorted(order) != list(range(problem.p)):
        raise ValueError("priority_order must be a permutation of the objective indices")
    started = time.perf_counter()
    run = EvalCounters.zeros(problem.p)
    ev = ProblemEvaluator(problem, run)
    x = _x0(problem, x0)
    x_start = x.copy()
    bounds = []
    stage_values = []
    res = None
    try:
        for stage, k in enumerate(order, start=1):
            spec = problem_spec(
                ev, x,
                lambda z, k=k: float(ev.f(z)[k]),
                lambda z, k=k: ev.jac(z)[0][k],
                lambda z, k=k: ev.hess(z).f[k],
                extra_ineq=list(bounds),
                **options,
            )
            res = minimize_constrained(spec)
            if res.status != OPTIMAL:
                raise StageInfeasibleError(stage, k, res)
            x = res.x_star
            stage_values.append(res.objective)
            bound = res.objective + tol_lex
            bounds.append((
                lambda z, k=k, b=bound: ev.f(z)[k] - b,
                lambda z, k=k: ev.jac(z)[0][k],
                lambda z, k=k: ev.hess(z).f[k],
            ))
    finally:
        _finish(run, counters)
    params = {"order": order, "tol_lex": tol_lex, "x0": x_start.tolist()}
    return _report("lex", problem, params, ev, res, run, started,
                   {"stage_values": stage_values})
