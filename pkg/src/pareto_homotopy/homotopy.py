"""Homotopy residual, its Jacobian, anchors and the t = 1 start system.

Unknowns are stacked as ``z = (x, w, u, v, t)``: decision variables, objective
weights, inequality multipliers, equality multipliers and the continuation
parameter.  Residual rows are ordered (stationarity, h, complementarity,
weight normalisation), lengths ``(n, s, m, p)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .problems import (
    EvalCounters,
    ProblemDefinition,
    evaluate_constraints,
    hessians,
    jacobians,
)


class AnchorError(ValueError):
    pass


class HomotopyDomainError(ValueError):
    """Negative weight or multiplier where the map is undefined."""


class StartSystemError(RuntimeError):
    """Newton on the t = 1 system did not converge."""

    def __init__(self, message: str, state: "HomotopyState", residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.state = state
        self.residual = residual


class NoStartSolutionError(StartSystemError):
    """The projection of x0 onto h = 0 violates g, so no u > 0 solves t = 1."""


@dataclass(frozen=True)
class Layout:
    n: int
    p: int
    m: int
    s: int

    @classmethod
    def of(cls, problem: ProblemDefinition) -> "Layout":
        return cls(problem.n, problem.p, problem.m, problem.s)

    @property
    def size(self) -> int:
        """Length of the flattened ``(x, w, u, v, t)`` vector."""
        return self.n + self.p + self.m + self.s + 1

    @property
    def rows(self) -> int:
        return self.n + self.s + self.m + self.p

    # column slices
    @property
    def x(self):
        return slice(0, self.n)

    @property
    def w(self):
        return slice(self.n, self.n + self.p)

    @property
    def u(self):
        return slice(self.n + self.p, self.n + self.p + self.m)

    @property
    def v(self):
        return slice(self.n + self.p + self.m, self.size - 1)

    # row slices
    @property
    def r_stat(self):
        return slice(0, self.n)

    @property
    def r_h(self):
        return slice(self.n, self.n + self.s)

    @property
    def r_comp(self):
        return slice(self.n + self.s, self.n + self.s + self.m)

    @property
    def r_w(self):
        return slice(self.n + self.s + self.m, self.rows)


@dataclass(frozen=True)
class HomotopyState:
    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t: float

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.x, self.w, self.u, self.v, [self.t]])

    @classmethod
    def from_flat(cls, layout: Layout, z) -> "HomotopyState":
        z = np.asarray(z, dtype=float)
        if z.shape != (layout.size,):
            raise ValueError(f"expected flat state of length {layout.size}, got {z.shape}")
        return cls(z[layout.x].copy(), z[layout.w].copy(), z[layout.u].copy(), z[layout.v].copy(), float(z[-1]))

    def with_t(self, t: float) -> "HomotopyState":
        return HomotopyState(self.x, self.w, self.u, self.v, float(t))


@dataclass(frozen=True)
class Anchor:
    x0: np.ndarray
    w0: np.ndarray
    u0: np.ndarray
    v0: np.ndarray
    g0: np.ndarray
    renormalized: bool = False

    def state(self, t: float = 1.0) -> HomotopyState:
        return HomotopyState(self.x0.copy(), self.w0.copy(), self.u0.copy(), self.v0.copy(), float(t))


def init_anchor(problem: ProblemDefinition, x0, w, u0=None) -> Anchor:
    """Build the fixed starting data of the homotopy.

    ``x0`` may violate the equality constraints but must satisfy
    ``g(x0) < 0`` strictly.  Weights are rescaled onto the simplex if needed.
    """
    x0 = np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    u0 = np.ones(problem.m) if u0 is None else np.asarray(u0, dtype=float)
    if x0.shape != (problem.n,) or w.shape != (problem.p,) or u0.shape != (problem.m,):
        raise AnchorError("anchor dimensions do not match the problem")
    if np.any(w <= 0):
        raise AnchorError("anchor weights must be strictly positive")
    if np.any(u0 <= 0):
        raise AnchorError("anchor inequality multipliers must be strictly positive")
    g0, _ = evaluate_constraints(problem, x0)
    if np.any(g0 >= 0):
        bad = [int(i) for i in np.flatnonzero(g0 >= 0)]
        raise AnchorError(f"anchor must satisfy g(x0) < 0 strictly; violated at {bad}")
    renormalized = abs(w.sum() - 1.0) > 1e-12
    if renormalized:
        warnings.warn(f"anchor weights {w.tolist()} rescaled to sum to 1", stacklevel=2)
        w = w / w.sum()
    return Anchor(x0=x0, w0=w, u0=u0, v0=np.zeros(problem.s), g0=g0, renormalized=renormalized)


def _split(layout: Layout, z):
    return z[layout.x], z[layout.w], z[layout.u], z[layout.v], z[-1]


def _residual(layout, x, w, u, v, t, Jf, Jg, Jh, g, h, x0, u0g0, w0_32):
    out = np.empty(layout.rows)
    out[layout.r_stat] = (1 - t) * (Jf.T @ w + Jg.T @ u) + Jh.T @ v + t * (x - x0)
    out[layout.r_h] = h
    out[layout.r_comp] = u * g - t * u0g0
    out[layout.r_w] = (1 - t) * (1 - np.sum(w)) - t * (w**1.5 - w0_32)
    return out


def _check_domain(w, u):
    if np.any(w < 0):
        raise HomotopyDomainError("negative weight component; w**1.5 is undefined")
    if np.any(u < 0):
        raise HomotopyDomainError("negative inequality multiplier")


def assemble_homotopy(
    problem: ProblemDefinition, anchor: Anchor, state, counters: EvalCounters | None = None
) -> np.ndarray:
    """Residual vector of length ``n + s + m + p``.  ``state`` may be flat."""
    layout = Layout.of(problem)
    z = state.flatten() if isinstance(state, HomotopyState) else np.asarray(state, dtype=float)
    x, w, u, v, t = _split(layout, z)
    _check_domain(w, u)
    g, h = evaluate_constraints(problem, x, counters)
    Jf, Jg, Jh = jacobians(problem, x, counters)
    if counters is not None:
        counters.homotopy_map += 1
    return _residual(layout, x, w, u, v, t, Jf, Jg, Jh, g, h, anchor.x0, anchor.u0 * anchor.g0, anchor.w0**1.5)


def homotopy_jacobian(
    problem: ProblemDefinition, anchor: Anchor, state, counters: EvalCounters | None = None
) -> np.ndarray:
    """Partial derivatives in column order ``(x, w, u, v, t)``."""
    L = Layout.of(problem)
    z = state.flatten() if isinstance(state, HomotopyState) else np.asarray(state, dtype=float)
    x, w, u, v, t = _split(L, z)
    _check_domain(w, u)
    g, h = evaluate_constraints(problem, x, counters)
    Jf, Jg, Jh = jacobians(problem, x, counters)
    hs = hessians(problem, x, counters)

    Q = t * np.eye(L.n)
    for wi, Hf in zip(w, hs.f):
        Q += (1 - t) * wi * Hf
    for uj, Hg in zip(u, hs.g):
        Q += (1 - t) * uj * Hg
    for vk, Hh in zip(v, hs.h):
        Q += vk * Hh

    J = np.zeros((L.rows, L.size))
    J[L.r_stat, L.x] = Q
    J[L.r_stat, L.w] = (1 - t) * Jf.T
    J[L.r_stat, L.u] = (1 - t) * Jg.T
    J[L.r_stat, L.v] = Jh.T
    J[L.r_stat, -1] = -(Jf.T @ w + Jg.T @ u) + (x - anchor.x0)

    J[L.r_h, L.x] = Jh

    J[L.r_comp, L.x] = u[:, None] * Jg
    J[L.r_comp, L.u] = np.diag(g)
    J[L.r_comp, -1] = -anchor.u0 * anchor.g0

    J[L.r_w, L.w] = -(1 - t) * np.ones((L.p, L.p)) - t * 1.5 * np.diag(np.sqrt(w))
    J[L.r_w, -1] = -(1 - np.sum(w)) - (w**1.5 - anchor.w0**1.5)

    if counters is not None:
        counters.homotopy_jacobian += 1
    return J


def kkt_residual(problem: ProblemDefinition, x, w, u, v, counters: EvalCounters | None = None) -> float:
    """Euclidean norm of the stacked KKT residual.

    Identical, bit for bit, to the norm of the homotopy residual at ``t = 0``
    for any anchor.
    """
    layout = Layout.of(problem)
    x, w, u, v = (np.asarray(a, dtype=float) for a in (x, w, u, v))
    g, h = evaluate_constraints(problem, x, counters)
    Jf, Jg, Jh = jacobians(problem, x, counters)
    zeros_n = np.zeros(problem.n)
    r = _residual(layout, x, w, u, v, 0.0, Jf, Jg, Jh, g, h, zeros_n, np.zeros(problem.m), np.zeros(problem.p))
    return float(np.linalg.norm(r))


def _omega_newton(problem, anchor, z, t_fixed, tol, max_iter, counters, project=False):
    """Damped Newton (least-norm) on ``H(., t_fixed) = 0`` over the omega block.

    Returns ``(z, residual_norm)``.  Steps are halved until w, u stay
    nonnegative and the residual decreases.
    """
    L = Layout.of(problem)
    z = np.array(z, dtype=float)
    z[-1] = t_fixed
    r = assemble_homotopy(problem, anchor, z, counters)
    res = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if res <= tol:
            break
        J = homotopy_jacobian(problem, anchor, z, counters)[:, :-1]
        if np.linalg.cond(J) < 1e12:
            step = np.linalg.solve(J, -r)
        else:
            # t = 0 duplicates the weight rows; take the minimum-norm step
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        accepted = False
        for _ in range(40):
            trial = z.copy()
            trial[:-1] += lam * step
            if project:
                # snap rounding-level negatives to the boundary
                for sl in (L.w, L.u):
                    seg = trial[sl]
                    seg[(seg < 0) & (seg > -1e-12)] = 0.0
            if np.all(trial[L.w] >= 0) and np.all(trial[L.u] >= 0):
                r_trial = assemble_homotopy(problem, anchor, trial, counters)
                res_trial = float(np.linalg.norm(r_trial))
                if res_trial < res:
                    z, r, res = trial, r_trial, res_trial
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
    return z, res


def _project_onto_equalities(problem, x0, tol, max_iter, counters):
    """Damped Newton on ``x - x0 + Jh^T v = 0, h(x) = 0``; ``(None, None)`` on failure."""
    n, s = problem.n, problem.s
    x, v = np.array(x0, dtype=float), np.zeros(s)

    def resid(x, v):
        _, h = evaluate_constraints(problem, x, counters)
        _, _, Jh = jacobians(problem, x, counters)
        return np.concatenate([x - x0 + Jh.T @ v, h]), Jh

    r, Jh = resid(x, v)
    res = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if res <= tol:
            return x, v
        K = np.eye(n)
        for vk, Hh in zip(v, hessians(problem, x, counters).h):
            K = K + vk * Hh
        M = np.block([[K, Jh.T], [Jh, np.zeros((s, s))]])
        step = np.linalg.lstsq(M, -r, rcond=None)[0]
        lam = 1.0
        for _ in range(40):
            xt, vt = x + lam * step[:n], v + lam * step[n:]
            rt, Jt = resid(xt, vt)
            if float(np.linalg.norm(rt)) < res:
                x, v, r, Jh, res = xt, vt, rt, Jt, float(np.linalg.norm(rt))
                break
            lam *= 0.5
        else:
            break
    return (x, v) if res <= 1e-8 else (None, None)


def solve_t1_system(
    problem: ProblemDefinition,
    anchor: Anchor,
    newton_tol: float = 1e-12,
    max_iter: int = 50,
    counters: EvalCounters | None = None,
) -> HomotopyState:
    """Solve the homotopy at ``t = 1`` starting from the anchor itself.

    For an anchor with ``h(x0) = 0`` the anchor is already the solution and is
    returned unchanged.
    """
    layout = Layout.of(problem)
    z0 = anchor.state(1.0).flatten()
    if problem.s:
        # at t = 1 the system decouples: w = w0, (x, v) is the projection of x0
        # onto h = 0, and u = u0 g0 / g(x) follows in closed form
        x, v = _project_onto_equalities(problem, anchor.x0, newton_tol, max_iter, counters)
        if x is not None:
            g, _ = evaluate_constraints(problem, x, counters)
            z0[layout.x], z0[layout.v] = x, v
            if np.any(g >= 0):
                state = HomotopyState.from_flat(layout, z0)
                res = float(np.linalg.norm(assemble_homotopy(problem, anchor, z0, counters)))
                raise NoStartSolutionError(
                    f"projection of x0 onto h = 0 has g = {np.max(g):.3e} >= 0; no positive multiplier at t = 1",
                    state, res,
                )
            z0[layout.u] = anchor.u0 * anchor.g0 / g
    z, res = _omega_newton(problem, anchor, z0, 1.0, newton_tol, max_iter, counters)
    state = HomotopyState.from_flat(layout, z)
    if res > newton_tol:
        raise StartSystemError("t = 1 system did not converge", state, res)
    return state
