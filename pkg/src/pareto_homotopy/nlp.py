"""Local constrained single-objective solver.

SciPy's SLSQP does the heavy lifting.  Its multipliers are not exposed, so
they are recovered by a bound-constrained least-squares fit on the active
set, and a few active-set Newton steps on the KKT system tighten the result
to ``tol_opt``.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import least_squares, lsq_linear, minimize

from .problems import (
    EvalCounters,
    ProblemDefinition,
    evaluate_constraints,
    evaluate_objectives,
    fd_jacobian,
    hessians,
    jacobians,
)

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

ACTIVE_TOL = 1e-6


def _empty(n):
    return lambda x: np.zeros(0)


def _empty_jac(n):
    return lambda x: np.zeros((0, n))


@dataclass
class NlpSpec:
    """``min objective(x)`` s.t. ``ineq(x) <= 0`` and ``eq(x) = 0``.

    Constraint blocks are vector valued; their Jacobians are ``(k, n)``.
    ``lagrangian_hess(x, u, v)`` is optional; finite differences of the
    Lagrangian gradient are used when it is missing.
    """

    objective: Callable
    objective_grad: Callable
    x0: np.ndarray
    ineq: Optional[Callable] = None
    ineq_jac: Optional[Callable] = None
    eq: Optional[Callable] = None
    eq_jac: Optional[Callable] = None
    lagrangian_hess: Optional[Callable] = None
    tol_opt: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 500

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.ndim != 1:
            raise ValueError("x0 must be a vector")
        if self.tol_opt <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        n = self.x0.size
        if self.ineq is None:
            self.ineq, self.ineq_jac = _empty(n), _empty_jac(n)
        if self.eq is None:
            self.eq, self.eq_jac = _empty(n), _empty_jac(n)
        if self.ineq_jac is None or self.eq_jac is None:
            raise ValueError("constraint blocks need Jacobians")

    @property
    def n(self) -> int:
        return self.x0.size


@dataclass
class NlpResult:
    x_star: np.ndarray
    objective: float
    u: np.ndarray
    v: np.ndarray
    kkt_residual: float
    ineq_violation: float
    eq_violation: float
    status: str
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class ProblemEvaluator:
    """Counting evaluator with a small cache keyed on ``x``.

    SLSQP asks for the objective and each constraint block separately at the
    same iterate; the cache makes the joint ``(g, h)`` evaluation count once.
    """

    def __init__(self, problem: ProblemDefinition, counters: EvalCounters | None = None, size: int = 8):
        self.problem = problem
        self.counters = counters
        self.size = size
        self._cache = {k: OrderedDict() for k in ("f", "gh", "jac", "hess")}

    def _get(self, kind, x, compute):
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        store = self._cache[kind]
        if key in store:
            store.move_to_end(key)
            return store[key]
        val = compute(x)
        store[key] = val
        if len(store) > self.size:
            store.popitem(last=False)
        return val

    def f(self, x):
        return self._get("f", x, lambda z: evaluate_objectives(self.problem, z, self.counters))

    def gh(self, x):
        return self._get("gh", x, lambda z: evaluate_constraints(self.problem, z, self.counters))

    def jac(self, x):
        return self._get("jac", x, lambda z: jacobians(self.problem, z, self.counters))

    def hess(self, x):
        return self._get("hess", x, lambda z: hessians(self.problem, z, self.counters))


def problem_spec(ev: ProblemEvaluator, x0, objective, objective_grad, objective_hess=None,
                 extra_ineq=(), **options) -> NlpSpec:
    """NLP over the problem's feasible set plus ``extra_ineq`` terms.

    ``extra_ineq`` is a sequence of ``(fun, grad, hess)`` triples, ``<= 0``.
    ``objective_hess`` enables the analytic Lagrangian Hessian.
    """
    problem = ev.problem
    extra = list(extra_ineq)

    def ineq(x):
        g = ev.gh(x)[0]
        if not extra:
            return g
        return np.concatenate([g, [c[0](x) for c in extra]])

    def ineq_jac(x):
        Jg = ev.jac(x)[1]
        if not extra:
            return Jg
        return np.vstack([Jg] + [np.atleast_2d(c[1](x)) for c in extra])

    lag_hess = None
    if objective_hess is not None and all(c[2] is not None for c in extra):

        def lag_hess(x, u, v):
            hs = ev.hess(x)
            W = np.array(objective_hess(x), dtype=float)
            for ui, Hg in zip(u[: problem.m], hs.g):
                W = W + ui * Hg
            for ui, c in zip(u[problem.m:], extra):
                W = W + ui * c[2](x)
            for vi, Hh in zip(v, hs.h):
                W = W + vi * Hh
            return W

    return NlpSpec(
        objective=objective,
        objective_grad=objective_grad,
        x0=np.asarray(x0, dtype=float),
        ineq=ineq,
        ineq_jac=ineq_jac,
        eq=lambda x: ev.gh(x)[1],
        eq_jac=lambda x: ev.jac(x)[2],
        lagrangian_hess=lag_hess,
        **options,
    )


# --- KKT bookkeeping --------------------------------------------------------


def _measures(spec: NlpSpec, x, u, v):
    """(kkt residual, inequality violation, equality violation)."""
    grad = spec.objective_grad(x)
    g, Jg = spec.ineq(x), spec.ineq_jac(x)
    h, Jh = spec.eq(x), spec.eq_jac(x)
    stat = grad + Jg.T @ u + Jh.T @ v
    comp = u * g
    kkt = float(np.sqrt(stat @ stat + comp @ comp))
    gviol = float(max(0.0, np.max(g))) if g.size else 0.0
    hviol = float(np.max(np.abs(h))) if h.size else 0.0
    return kkt, gviol, hviol


def _merit(spec, x, u, v):
    kkt, gv, hv = _measures(spec, x, u, v)
    return np.hypot(kkt, np.hypot(gv, hv))


def estimate_multipliers(spec: NlpSpec, x, active_tol: float = ACTIVE_TOL):
    """Least-squares multipliers with ``u >= 0``; inactive ``u`` are zero."""
    g, Jg = spec.ineq(x), spec.ineq_jac(x)
    Jh = spec.eq_jac(x)
    grad = spec.objective_grad(x)
    active = np.flatnonzero(g >= -active_tol)
    A = np.hstack([Jg[active].T, Jh.T]) if (active.size + Jh.shape[0]) else np.zeros((x.size, 0))
    u = np.zeros(g.size)
    v = np.zeros(Jh.shape[0])
    if A.shape[1] == 0:
        return u, v
    lb = np.concatenate([np.zeros(active.size), np.full(Jh.shape[0], -np.inf)])
    ub = np.full(A.shape[1], np.inf)
    sol = lsq_linear(A, -grad, bounds=(lb, ub), method="bvls", tol=1e-15)
    u[active] = sol.x[: active.size]
    v[:] = sol.x[active.size:]
    return u, v


def _lagrangian_hessian(spec: NlpSpec, x, u, v):
    if spec.lagrangian_hess is not None:
        return np.asarray(spec.lagrangian_hess(x, u, v), dtype=float)

    def lag_grad(z):
        return spec.objective_grad(z) + spec.ineq_jac(z).T @ u + spec.eq_jac(z).T @ v

    W = fd_jacobian(lag_grad, x)
    return 0.5 * (W + W.T)


def _polish(spec: NlpSpec, x, u, v, max_steps: int = 20):
    """Newton on the equality-constrained KKT system of the active set."""
    best = (x, u, v, _merit(spec, x, u, v))
    g = spec.ineq(x)
    active = np.flatnonzero((g >= -ACTIVE_TOL) | (u > 0))
    n, s, a = x.size, v.size, active.size
    for _ in range(max_steps):
        x, u, v, merit = best
        if merit <= 1e-14:
            break
        grad = spec.objective_grad(x)
        g, Jg = spec.ineq(x), spec.ineq_jac(x)
        h, Jh = spec.eq(x), spec.eq_jac(x)
        JA = Jg[active]
        r = np.concatenate([grad + JA.T @ u[active] + Jh.T @ v, g[active], h])
        W = _lagrangian_hessian(spec, x, u, v)
        K = np.zeros((n + a + s, n + a + s))
        K[:n, :n] = W
        K[:n, n:n + a] = JA.T
        K[:n, n + a:] = Jh.T
        K[n:n + a, :n] = JA
        K[n + a:, :n] = Jh
        try:
            d = np.linalg.solve(K, -r)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(K, -r, rcond=None)[0]
        lam = 1.0
        improved = False
        for _ in range(10):
            xt = x + lam * d[:n]
            ut = u.copy()
            ut[active] = u[active] + lam * d[n:n + a]
            vt = v + lam * d[n + a:]
            if np.all(ut >= 0):
                mt = _merit(spec, xt, ut, vt)
                if np.isfinite(mt) and mt < merit:
                    best = (xt, ut, vt, mt)
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            break
    return best[:3]


def _slsqp(spec: NlpSpec, x0, max_iter):
    cons = []
    if spec.ineq(x0).size:
        cons.append({"type": "ineq", "fun": lambda x: -spec.ineq(x), "jac": lambda x: -spec.ineq_jac(x)})
    if spec.eq(x0).size:
        cons.append({"type": "eq", "fun": spec.eq, "jac": spec.eq_jac})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(
            spec.objective,
            x0,
            jac=spec.objective_grad,
            constraints=cons,
            method="SLSQP",
            options={"maxiter": max_iter, "ftol": 1e-14},
        )
    return res


def _restore(spec: NlpSpec, x):
    """Least-squares feasibility restoration on ``(max(g, 0), h)``."""

    def resid(z):
        return np.concatenate([np.maximum(spec.ineq(z), 0.0), spec.eq(z)])

    def jac(z):
        active = spec.ineq(z) > 0
        Jg = spec.ineq_jac(z) * active[:, None]
        return np.vstack([Jg, spec.eq_jac(z)])

    if resid(x).size == 0:
        return x
    sol = least_squares(resid, x, jac=jac, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
    return np.asarray(sol.x, dtype=float)


def minimize_constrained(spec: NlpSpec) -> NlpResult:
    """Local KKT point of ``spec``; deterministic for fixed inputs.

    When SLSQP stalls away from feasibility the iterate is first moved onto
    the constraint set by least squares and SLSQP is restarted from there; a
    stalled but feasible run gets one plain warm restart.
    """
    x = spec.x0.copy()
    iterations = 0
    message = ""
    hit_cap = False
    for attempt in range(3):
        res = _slsqp(spec, x, spec.max_iter)
        iterations += int(res.nit)
        message = str(res.message)
        hit_cap = res.status == 9
        if np.all(np.isfinite(res.x)):
            x = np.asarray(res.x, dtype=float)
        u, v = estimate_multipliers(spec, x)
        x, u, v = _polish(spec, x, u, v)
        kkt, gviol, hviol = _measures(spec, x, u, v)
        if kkt <= spec.tol_opt and gviol <= spec.tol_feas and hviol <= spec.tol_feas:
            return NlpResult(x, float(spec.objective(x)), u, v, kkt, gviol, hviol, OPTIMAL, iterations, message)
        if attempt < 2 and (gviol > spec.tol_feas or hviol > spec.tol_feas):
            x = _restore(spec, x if attempt else spec.x0)
    if gviol > spec.tol_feas or hviol > spec.tol_feas:
        status = MAX_ITER if hit_cap else INFEASIBLE
    else:
        status = MAX_ITER
    return NlpResult(x, float(spec.objective(x)), u, v, kkt, gviol, hviol, status, iterations, message)


def project_to_feasible(problem: ProblemDefinition, x0, counters: EvalCounters | None = None,
                        ev: ProblemEvaluator | None = None, **options) -> NlpResult:
    """Nearest feasible point to ``x0`` in the Euclidean norm."""
    if problem.m + problem.s == 0:
        raise ValueError("projection needs at least one constraint")
    x0 = np.asarray(x0, dtype=float)
    ev = ev or ProblemEvaluator(problem, counters)
    eye = np.eye(problem.n)
    spec = problem_spec(
        ev,
        x0,
        objective=lambda z: float(0.5 * np.sum((z - x0) ** 2)),
        objective_grad=lambda z: z - x0,
        objective_hess=lambda z: eye,
        **options,
    )
    return minimize_constrained(spec)
