"""NSGA-II with constraint-domination, SBX crossover and polynomial mutation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problems import EvalCounters, FeasibilityReport, ProblemDefinition, evaluate_batch
from .results import FrontEntry, FrontSet, SolveReport


@dataclass
class Individual:
    x: np.ndarray
    f: np.ndarray
    violation: float = 0.0
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


@dataclass(frozen=True)
class GaConfig:
    pop_size: int = 100
    generations: int = 100
    crossover_prob: float = 0.9
    eta_c: float = 20.0
    mutation_prob: Optional[float] = None  # None means 1/n
    eta_m: float = 20.0
    delta_h: float = 1e-2
    seed: int = 42

    def __post_init__(self):
        if self.pop_size < 4 or self.pop_size % 2:
            raise ValueError("population size must be even and at least 4")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for prob in (self.crossover_prob, self.mutation_prob):
            if prob is not None and not 0.0 <= prob <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.delta_h <= 0:
            raise ValueError("delta_h must be positive")
        if self.eta_c < 0 or self.eta_m < 0:
            raise ValueError("distribution indices must be nonnegative")


def constraint_violation(G, H, delta_h: float) -> np.ndarray:
    """Row-wise ``sum max(g, 0) + sum max(|h| - delta_h, 0)``."""
    G = np.atleast_2d(G)
    H = np.atleast_2d(H)
    return np.maximum(G, 0).sum(axis=1) + np.maximum(np.abs(H) - delta_h, 0).sum(axis=1)


def _domination_matrix(F, V) -> np.ndarray:
    """``D[i, j]`` is True when ``i`` constraint-dominates ``j``."""
    F = np.asarray(F, dtype=float)
    V = np.asarray(V, dtype=float)
    feas = V == 0
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    pareto = le & lt & feas[:, None] & feas[None, :]
    feas_beats = feas[:, None] & ~feas[None, :]
    both_infeas = ~feas[:, None] & ~feas[None, :]
    less_viol = both_infeas & (V[:, None] < V[None, :])
    return pareto | feas_beats | less_viol


def _sort_arrays(F, V) -> list:
    D = _domination_matrix(F, V)
    dominated_by = D.sum(axis=0)
    fronts = []
    current = list(np.flatnonzero(dominated_by == 0))
    remaining = dominated_by.copy()
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(D[i]):
                remaining[j] -= 1
                if remaining[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return [[int(i) for i in fr] for fr in fronts]


def fast_nondominated_sort(population) -> list:
    """Front index lists (best first) under constraint-domination."""
    if not population:
        return []
    F = np.array([ind.f for ind in population])
    V = np.array([ind.violation for ind in population])
    return _sort_arrays(F, V)


def _crowding(F) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    k, p = F.shape
    if k <= 2:
        return np.full(k, np.inf)
    d = np.zeros(k)
    for j in range(p):
        order = np.argsort(F[:, j], kind="stable")
        span = F[order[-1], j] - F[order[0], j]
        d[order[0]] = d[order[-1]] = np.inf
        if span <= 0:
            continue
        gaps = (F[order[2:], j] - F[order[:-2], j]) / span
        d[order[1:-1]] += gaps
    return d


def crowding_distance(front) -> np.ndarray:
    """Crowding distance of each member; extremes of every objective get ``inf``."""
    if len(front) == 0:
        raise ValueError("front is empty")
    F = np.array([ind.f if isinstance(ind, Individual) else ind for ind in front])
    return _crowding(F)


# --- variation operators ----------------------------------------------------


def _sbx(rng, P1, P2, lo, hi, eta, pc):
    """Simulated binary crossover, bounded variant, applied pairwise."""
    C1, C2 = P1.copy(), P2.copy()
    k, n = P1.shape
    do_pair = rng.random(k) < pc
    do_var = rng.random((k, n)) < 0.5
    u = rng.random((k, n))
    swap = rng.random((k, n)) < 0.5
    mask = do_pair[:, None] & do_var & (np.abs(P1 - P2) > 1e-14)
    y1 = np.minimum(P1, P2)
    y2 = np.maximum(P1, P2)
    diff = np.where(mask, y2 - y1, 1.0)
    e1 = 1.0 / (eta + 1.0)

    def betaq(beta):
        alpha = 2.0 - beta ** (-(eta + 1.0))
        return np.where(
            u <= 1.0 / alpha,
            (u * alpha) ** e1,
            (1.0 / np.maximum(2.0 - u * alpha, 1e-300)) ** e1,
        )

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        b1 = betaq(1.0 + 2.0 * (y1 - lo) / diff)
        b2 = betaq(1.0 + 2.0 * (hi - y2) / diff)
    c1 = np.clip(0.5 * ((y1 + y2) - b1 * (y2 - y1)), lo, hi)
    c2 = np.clip(0.5 * ((y1 + y2) + b2 * (y2 - y1)), lo, hi)
    first = np.where(swap, c2, c1)
    second = np.where(swap, c1, c2)
    C1 = np.where(mask, first, C1)
    C2 = np.where(mask, second, C2)
    return C1, C2


def _poly_mutation(rng, X, lo, hi, eta, pm):
    k, n = X.shape
    mask = rng.random((k, n)) < pm
    r = rng.random((k, n))
    span = hi - lo
    d1 = (X - lo) / span
    d2 = (hi - X) / span
    power = 1.0 / (eta + 1.0)
    low = r < 0.5
    val_lo = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1) ** (eta + 1.0)
    val_hi = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2) ** (eta + 1.0)
    dq = np.where(low, val_lo ** power - 1.0, 1.0 - val_hi ** power)
    Y = np.clip(X + dq * span, lo, hi)
    return np.where(mask, Y, X)


def _tournament(rng, rank, crowd, count):
    pairs = rng.integers(0, rank.size, size=(count, 2))
    a, b = pairs[:, 0], pairs[:, 1]
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
    return np.where(a_wins, a, b)


# --- main loop --------------------------------------------------------------


@dataclass
class GaRun:
    front: FrontSet
    population: list
    # smallest violation in the population after each generation (index 0 = initial)
    best_violation: list = field(default_factory=list)
    config: Optional[GaConfig] = None


def _rank_and_crowd(F, V):
    fronts = _sort_arrays(F, V)
    rank = np.empty(F.shape[0], dtype=int)
    crowd = np.empty(F.shape[0])
    for r, fr in enumerate(fronts, start=1):
        rank[fr] = r
        crowd[fr] = _crowding(F[fr])
    return fronts, rank, crowd


def run_nsga2(problem: ProblemDefinition, cfg: GaConfig | None = None,
              counters: EvalCounters | None = None) -> GaRun:
    """Elitist (mu + lambda) loop; reproducible from ``cfg.seed``."""
    cfg = cfg or GaConfig()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = (np.asarray(b, dtype=float) for b in problem.sampling_box)
    N = cfg.pop_size
    pm = 1.0 / problem.n if cfg.mutation_prob is None else cfg.mutation_prob

    def evaluate(X):
        F, G, H = evaluate_batch(problem, X, counters)
        V = constraint_violation(G, H, cfg.delta_h)
        bad = ~(np.all(np.isfinite(F), axis=1) & np.isfinite(V))
        V = np.where(bad, np.inf, V)
        F = np.where(bad[:, None], np.inf, F)
        return F, G, H, V

    X = rng.uniform(lo, hi, size=(N, problem.n))
    F, G, H, V = evaluate(X)
    _, rank, crowd = _rank_and_crowd(F, V)
    history = [float(V.min())]

    for _ in range(cfg.generations):
        parents = _tournament(rng, rank, crowd, N)
        P1, P2 = X[parents[0::2]], X[parents[1::2]]
        C1, C2 = _sbx(rng, P1, P2, lo, hi, cfg.eta_c, cfg.crossover_prob)
        Q = np.empty_like(X)
        Q[0::2], Q[1::2] = C1, C2
        Q = _poly_mutation(rng, Q, lo, hi, cfg.eta_m, pm)
        FQ, GQ, HQ, VQ = evaluate(Q)

        RX = np.vstack([X, Q])
        RF, RG, RH = np.vstack([F, FQ]), np.vstack([G, GQ]), np.vstack([H, HQ])
        RV = np.concatenate([V, VQ])
        fronts, r_rank, r_crowd = _rank_and_crowd(RF, RV)
        chosen = []
        for fr in fronts:
            if len(chosen) + len(fr) <= N:
                chosen.extend(fr)
            else:
                fr = np.asarray(fr)
                order = np.argsort(-r_crowd[fr], kind="stable")
                chosen.extend(fr[order[: N - len(chosen)]].tolist())
            if len(chosen) == N:
                break
        chosen = np.asarray(chosen)
        X, F, G, H, V = RX[chosen], RF[chosen], RG[chosen], RH[chosen], RV[chosen]
        rank, crowd = r_rank[chosen], r_crowd[chosen]
        history.append(float(V.min()))

    population = [Individual(X[i], F[i], float(V[i]), int(rank[i]), float(crowd[i])) for i in range(N)]
    front = FrontSet()
    first = np.flatnonzero(rank == 1)
    feasible_first = [i for i in first if V[i] == 0]
    if feasible_first:
        picks = feasible_first
    else:
        picks = [int(i) for i in np.flatnonzero(V == V.min())]
        front.notes.append("no feasible individual; least-violation individuals kept and flagged infeasible")
    for i in picks:
        rep = FeasibilityReport(
            g_values=G[i],
            h_values=H[i],
            g_ok=bool(np.all(G[i] <= 0)),
            h_ok=bool(np.all(np.abs(H[i]) <= cfg.delta_h)),
            active_set=tuple(int(j) for j in np.flatnonzero(np.abs(G[i]) <= 1e-6)),
        )
        front.entries.append(FrontEntry(X[i], F[i], "nsga2", {"seed": cfg.seed, "violation": float(V[i])}, rep))
    return GaRun(front, population, history, cfg)


def evolve(problem: ProblemDefinition, cfg: GaConfig | None = None,
           counters: EvalCounters | None = None) -> FrontSet:
    return run_nsga2(problem, cfg, counters).front


def best_entry(front: FrontSet, weights=None) -> FrontEntry:
    """Feasible entry with the smallest weighted objective sum (equal weights by default)."""
    if not front.entries:
        raise ValueError("front is empty")
    pool = [e for e in front.entries if e.feasibility.feasible] or list(front.entries)
    p = len(pool[0].f)
    w = np.full(p, 1.0 / p) if weights is None else np.asarray(weights, dtype=float)
    return min(pool, key=lambda e: float(w @ e.f))


def nsga2_solve(problem: ProblemDefinition, cfg: GaConfig | None = None,
                counters: EvalCounters | None = None, weights=None) -> SolveReport:
    """Run NSGA-II and report its best front member as a single solution."""
    cfg = cfg or GaConfig(**problem.presets.get("nsga2", {}))
    started = time.perf_counter()
    run = EvalCounters.zeros(problem.p)
    ga = run_nsga2(problem, cfg, run)
    best = best_entry(ga.front, weights)
    if counters is not None:
        counters.merge(run)
    params = {
        "pop_size": cfg.pop_size,
        "generations": cfg.generations,
        "delta_h": cfg.delta_h,
        "seed": cfg.seed,
    }
    return SolveReport(
        method="nsga2",
        problem=problem.name,
        params=params,
        x=best.x,
        f=best.f,
        g=best.feasibility.g_values,
        h=best.feasibility.h_values,
        kkt_residual=float("nan"),
        feasible=best.feasibility.feasible,
        counters=run,
        wall_time=time.perf_counter() - started,
        status="ok" if best.feasibility.feasible else "failed",
        message="" if best.feasibility.feasible else "no feasible individual",
        extra={"front_size": len(ga.front), "violation": best.params["violation"], "run": ga},
    )
