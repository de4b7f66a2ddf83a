"""Problem definitions, evaluation counting and the benchmark registry.

A problem is a set of scalar functions of ``x``: ``p`` objectives, ``m``
inequality constraints (``g(x) <= 0``) and ``s`` equality constraints
(``h(x) = 0``).  Every function value callable accepts either a single point of
shape ``(n,)`` or a batch of shape ``(k, n)``; gradient and Hessian providers
only need to handle single points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

SYMMETRY_TOL = 1e-10
DEFAULT_TOL_G = 1e-8
DEFAULT_TOL_H = 1e-6
DEFAULT_TOL_ACTIVE = 1e-6


class DimensionError(ValueError):
    """Input vector does not match the problem dimension."""


class NonFiniteError(FloatingPointError):
    """A function returned NaN or inf."""

    def __init__(self, kind: str, index: int, x=None):
        self.kind = kind
        self.index = index
        self.x = None if x is None else np.array(x, dtype=float)
        super().__init__(f"non-finite value in {kind}[{index}]")


class UnknownProblemError(KeyError):
    pass


@dataclass(frozen=True)
class ScalarFunction:
    """A scalar function with optional analytic first and second derivatives."""

    fun: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""


@dataclass(frozen=True)
class ProblemDefinition:
    name: str
    n: int
    objectives: tuple
    ineq_constraints: tuple = ()
    eq_constraints: tuple = ()
    sampling_box: tuple = (None, None)
    # registered starting data used by the CLI and benchmark presets
    x0: Optional[np.ndarray] = None
    anchor_x0: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    presets: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if len(self.objectives) < 1:
            raise ValueError("at least one objective is required")
        lower, upper = self.sampling_box
        if lower is not None:
            lower = np.asarray(lower, dtype=float)
            upper = np.asarray(upper, dtype=float)
            if lower.shape != (self.n,) or upper.shape != (self.n,):
                raise DimensionError("sampling_box bounds must have length n")
            if not np.all(lower < upper):
                raise ValueError("sampling_box requires lower < upper componentwise")
            object.__setattr__(self, "sampling_box", (lower, upper))
        for attr in ("x0", "anchor_x0", "weights"):
            val = getattr(self, attr)
            if val is not None:
                object.__setattr__(self, attr, np.asarray(val, dtype=float))

    @property
    def p(self) -> int:
        return len(self.objectives)

    @property
    def m(self) -> int:
        return len(self.ineq_constraints)

    @property
    def s(self) -> int:
        return len(self.eq_constraints)

    @property
    def functions(self) -> tuple:
        return tuple(self.objectives) + tuple(self.ineq_constraints) + tuple(self.eq_constraints)

    @property
    def has_analytic_gradients(self) -> bool:
        return all(fn.grad is not None for fn in self.functions)

    @property
    def has_analytic_hessians(self) -> bool:
        return all(fn.hess is not None for fn in self.functions)


@dataclass
class EvalCounters:
    """Per-run evaluation tallies.

    ``constraints`` counts joint evaluations of the whole ``(g, h)`` block.
    """

    f: list = field(default_factory=list)
    constraints: int = 0
    gradients: int = 0
    hessians: int = 0
    homotopy_map: int = 0
    homotopy_jacobian: int = 0

    @classmethod
    def zeros(cls, p: int) -> "EvalCounters":
        return cls(f=[0] * p)

    def _ensure(self, p: int) -> None:
        if len(self.f) < p:
            self.f.extend([0] * (p - len(self.f)))

    def add_objectives(self, p: int, k: int = 1) -> None:
        self._ensure(p)
        for i in range(p):
            self.f[i] += k

    def __add__(self, other: "EvalCounters") -> "EvalCounters":
        p = max(len(self.f), len(other.f))
        a = list(self.f) + [0] * (p - len(self.f))
        b = list(other.f) + [0] * (p - len(other.f))
        return EvalCounters(
            f=[x + y for x, y in zip(a, b)],
            constraints=self.constraints + other.constraints,
            gradients=self.gradients + other.gradients,
            hessians=self.hessians + other.hessians,
            homotopy_map=self.homotopy_map + other.homotopy_map,
            homotopy_jacobian=self.homotopy_jacobian + other.homotopy_jacobian,
        )

    def merge(self, other: "EvalCounters") -> None:
        """In-place accumulation of another run's counters."""
        total = self + other
        self.f = total.f
        self.constraints = total.constraints
        self.gradients = total.gradients
        self.hessians = total.hessians
        self.homotopy_map = total.homotopy_map
        self.homotopy_jacobian = total.homotopy_jacobian

    def copy(self) -> "EvalCounters":
        return EvalCounters(
            f=list(self.f),
            constraints=self.constraints,
            gradients=self.gradients,
            hessians=self.hessians,
            homotopy_map=self.homotopy_map,
            homotopy_jacobian=self.homotopy_jacobian,
        )

    @property
    def max_objective(self) -> int:
        return max(self.f) if self.f else 0

    def as_dict(self) -> dict:
        return {
            "f": list(self.f),
            "constraints": self.constraints,
            "gradients": self.gradients,
            "hessians": self.hessians,
            "homotopy_map": self.homotopy_map,
            "homotopy_jacobian": self.homotopy_jacobian,
        }


@dataclass(frozen=True)
class FeasibilityReport:
    g_values: np.ndarray
    h_values: np.ndarray
    g_ok: bool
    h_ok: bool
    active_set: tuple

    @property
    def feasible(self) -> bool:
        return self.g_ok and self.h_ok

    @property
    def max_violation(self) -> float:
        viol = 0.0
        if self.g_values.size:
            viol = max(viol, float(np.max(self.g_values)))
        if self.h_values.size:
            viol = max(viol, float(np.max(np.abs(self.h_values))))
        return viol

    def __eq__(self, other):
        if not isinstance(other, FeasibilityReport):
            return NotImplemented
        return (
            np.array_equal(self.g_values, other.g_values)
            and np.array_equal(self.h_values, other.h_values)
            and self.g_ok == other.g_ok
            and self.h_ok == other.h_ok
            and self.active_set == other.active_set
        )


def _check_point(problem: ProblemDefinition, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise DimensionError(f"expected x of shape ({problem.n},), got {x.shape}")
    return x


def _check_finite(values: np.ndarray, kind: str, x) -> np.ndarray:
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NonFiniteError(kind, int(np.flatnonzero(bad.reshape(bad.shape[0], -1).any(axis=1))[0]), x)
    return values


def evaluate_objectives(problem: ProblemDefinition, x, counters: EvalCounters | None = None) -> np.ndarray:
    x = _check_point(problem, x)
    out = np.array([float(fn.fun(x)) for fn in problem.objectives])
    if counters is not None:
        counters.add_objectives(problem.p)
    return _check_finite(out, "f", x)


def evaluate_constraints(problem: ProblemDefinition, x, counters: EvalCounters | None = None):
    """Return raw ``(g, h)``; one call counts once toward the joint counter."""
    x = _check_point(problem, x)
    g = np.array([float(fn.fun(x)) for fn in problem.ineq_constraints])
    h = np.array([float(fn.fun(x)) for fn in problem.eq_constraints])
    if counters is not None:
        counters.constraints += 1
    _check_finite(g, "g", x)
    _check_finite(h, "h", x)
    return g, h


def evaluate_batch(problem: ProblemDefinition, X, counters: EvalCounters | None = None, objectives: bool = True):
    """Vectorised evaluation over rows of ``X``; returns ``(F, G, H)``.

    No finiteness check: scans filter non-finite rows themselves.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != problem.n:
        raise DimensionError(f"expected rows of length {problem.n}, got {X.shape[1]}")
    k = X.shape[0]

    def stack(fns):
        if not fns:
            return np.empty((k, 0))
        return np.column_stack([np.broadcast_to(fn.fun(X.T), (k,)) for fn in fns])

    F = stack(problem.objectives) if objectives else None
    G = stack(problem.ineq_constraints)
    H = stack(problem.eq_constraints)
    if counters is not None:
        if objectives:
            counters.add_objectives(problem.p, k)
        counters.constraints += k
    return F, G, H


def fd_gradient(fun, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central differences with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (float(fun(xp)) - float(fun(xm))) / (2 * step)
    return grad


def fd_jacobian(vecfun, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued map; columns index ``x``."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(vecfun(x), dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        step = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        jac[:, i] = (np.asarray(vecfun(xp)) - np.asarray(vecfun(xm))).ravel() / (2 * step)
    return jac


def _gradient(fn: ScalarFunction, x: np.ndarray) -> np.ndarray:
    if fn.grad is not None:
        return np.asarray(fn.grad(x), dtype=float).reshape(-1)
    return fd_gradient(fn.fun, x)


def _hessian(fn: ScalarFunction, x: np.ndarray) -> tuple:
    if fn.hess is not None:
        H = np.array(fn.hess(x), dtype=float)
        if np.max(np.abs(H - H.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError(f"analytic Hessian of {fn.name or 'function'} is not symmetric")
        return H, False
    H = fd_jacobian(lambda z: _gradient(fn, z), x)
    return 0.5 * (H + H.T), True


def jacobians(problem: ProblemDefinition, x, counters: EvalCounters | None = None):
    """Return ``(Jf, Jg, Jh)`` with one gradient per row."""
    x = _check_point(problem, x)
    n = problem.n

    def rows(fns, kind):
        if not fns:
            return np.empty((0, n))
        J = np.vstack([_gradient(fn, x) for fn in fns])
        if J.shape != (len(fns), n):
            raise DimensionError(f"{kind} gradients must have length {n}")
        return _check_finite(J, f"grad {kind}", x)

    out = rows(problem.objectives, "f"), rows(problem.ineq_constraints, "g"), rows(problem.eq_constraints, "h")
    if counters is not None:
        counters.gradients += 1
    return out


@dataclass(frozen=True)
class HessianSet:
    f: tuple
    g: tuple
    h: tuple
    finite_difference: bool = False


def hessians(problem: ProblemDefinition, x, counters: EvalCounters | None = None) -> HessianSet:
    x = _check_point(problem, x)
    used_fd = False
    blocks = []
    for fns in (problem.objectives, problem.ineq_constraints, problem.eq_constraints):
        mats = []
        for fn in fns:
            H, fd = _hessian(fn, x)
            used_fd = used_fd or fd
            mats.append(H)
        blocks.append(tuple(mats))
    if counters is not None:
        counters.hessians += 1
    return HessianSet(*blocks, finite_difference=used_fd)


def feasibility_report(
    problem: ProblemDefinition,
    x,
    tol_g: float = DEFAULT_TOL_G,
    tol_h: float = DEFAULT_TOL_H,
    tol_active: float = DEFAULT_TOL_ACTIVE,
    counters: EvalCounters | None = None,
) -> FeasibilityReport:
    if min(tol_g, tol_h, tol_active) <= 0:
        raise ValueError("tolerances must be positive")
    g, h = evaluate_constraints(problem, x, counters)
    return FeasibilityReport(
        g_values=g,
        h_values=h,
        g_ok=bool(np.all(g <= tol_g)),
        h_ok=bool(np.all(np.abs(h) <= tol_h)),
        active_set=tuple(int(i) for i in np.flatnonzero(np.abs(g) <= tol_active)),
    )


# --- benchmark problems -----------------------------------------------------
# Function values index the last axis so batches of shape (n, k) (i.e. X.T)
# evaluate in one call.


def _ex2_5d() -> ProblemDefinition:
    def f1(x):
        return x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2 + x[4] ** 2

    def f2(x):
        return 3 * x[0] + 2 * x[1] - x[2] / 3 + 0.01 * (x[3] - x[4]) ** 3

    def f2_grad(x):
        d = 0.03 * (x[3] - x[4]) ** 2
        return np.array([3.0, 2.0, -1.0 / 3.0, d, -d])

    def f2_hess(x):
        c = 0.06 * (x[3] - x[4])
        H = np.zeros((5, 5))
        H[3, 3] = H[4, 4] = c
        H[3, 4] = H[4, 3] = -c
        return H

    def g1(x):
        return x[0] ** 2 + x[1] ** 2 + x[2] ** 2 + x[3] ** 2 - 10

    def h1(x):
        return 4 * x[0] - 2 * x[1] + 0.8 * x[2] + 0.6 * x[3] + 0.5 * x[4] ** 2

    def h1_hess(x):
        H = np.zeros((5, 5))
        H[4, 4] = 1.0
        return H

    def h2(x):
        return x[0] + 2 * x[1] - x[2] - 0.5 * x[3] + x[4] - 2

    return ProblemDefinition(
        name="ex2_5d",
        n=5,
        objectives=(
            ScalarFunction(f1, lambda x: 2 * np.asarray(x, float), lambda x: 2 * np.eye(5), "f1"),
            ScalarFunction(f2, f2_grad, f2_hess, "f2"),
        ),
        ineq_constraints=(
            ScalarFunction(
                g1,
                lambda x: np.array([2 * x[0], 2 * x[1], 2 * x[2], 2 * x[3], 0.0]),
                lambda x: np.diag([2.0, 2.0, 2.0, 2.0, 0.0]),
                "g1",
            ),
        ),
        eq_constraints=(
            ScalarFunction(h1, lambda x: np.array([4.0, -2.0, 0.8, 0.6, x[4]]), h1_hess, "h1"),
            ScalarFunction(h2, lambda x: np.array([1.0, 2.0, -1.0, -0.5, 1.0]), lambda x: np.zeros((5, 5)), "h2"),
        ),
        sampling_box=(np.full(5, -5.0), np.full(5, 5.0)),
        x0=np.array([1.0, 2.0, 0.0, 1.0, 1.0]),
        anchor_x0=np.array([1.0, 2.0, 0.0, 1.0, 1.0]),
        weights=np.array([0.4, 0.6]),
        presets={
            "starts": (
                (1.0, 2.0, 0.0, 1.0, 1.0),
                (0.5, 0.5, 0.5, 0.5, 0.5),
                (-2.0, 0.0, 0.0, 0.0, 4.0),
                (0.4, 0.8, 0.0, 0.0, 0.0),
            ),
            "weights_alt": (0.96, 0.04),
            "nsga2": {"pop_size": 100, "generations": 200, "delta_h": 0.1},
            "ecm_eps": (float("nan"), -0.4),
        },
        description="5-variable, two-objective problem with two equality and one inequality constraint",
    )


def _ex1_2d() -> ProblemDefinition:
    def f1(x):
        return x[0] ** 2 + 2 * x[1] ** 2

    def f2(x):
        return -3 * x[0] + x[1] ** 2 - x[0] * x[1]

    def g1(x):
        return x[0] ** 2 - 5 * x[1] + 3

    def h1(x):
        return x[0] + x[1] ** 4

    return ProblemDefinition(
        name="ex1_2d",
        n=2,
        objectives=(
            ScalarFunction(f1, lambda x: np.array([2 * x[0], 4 * x[1]]), lambda x: np.diag([2.0, 4.0]), "f1"),
            ScalarFunction(
                f2,
                lambda x: np.array([-3 - x[1], 2 * x[1] - x[0]]),
                lambda x: np.array([[0.0, -1.0], [-1.0, 2.0]]),
                "f2",
            ),
        ),
        ineq_constraints=(
            ScalarFunction(g1, lambda x: np.array([2 * x[0], -5.0]), lambda x: np.diag([2.0, 0.0]), "g1"),
        ),
        eq_constraints=(
            ScalarFunction(
                h1,
                lambda x: np.array([1.0, 4 * x[1] ** 3]),
                lambda x: np.array([[0.0, 0.0], [0.0, 12 * x[1] ** 2]]),
                "h1",
            ),
        ),
        sampling_box=(np.array([-4.0, -2.0]), np.array([4.0, 2.0])),
        x0=np.array([0.0, 0.0]),
        anchor_x0=np.array([-1.0, 1.0]),
        weights=np.array([0.5, 0.5]),
        presets={
            "nsga2": {"pop_size": 100, "generations": 100, "delta_h": 1e-2},
            "ecm_eps": (float("nan"), 1.0),
        },
        description="2-variable, two-objective problem with a single Pareto-optimal point",
    )


_REGISTRY = {
    "ex2_5d": _ex2_5d,
    "ex1_2d": _ex1_2d,
}


def list_problems() -> list:
    return sorted(_REGISTRY)


def get_problem(name: str) -> ProblemDefinition:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; available: {', '.join(list_problems())}"
        ) from None
    return factory()


def as_vector(values: Sequence[float] | str) -> np.ndarray:
    """Parse ``"1,2,3"`` or a sequence into a float vector."""
    if isinstance(values, str):
        values = [float(v) for v in values.split(",") if v.strip()]
    return np.asarray(values, dtype=float)
