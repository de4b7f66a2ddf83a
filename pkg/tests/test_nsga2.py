import math

import numpy as np
import pytest

from pareto_homotopy.nsga2 import (
    GaConfig,
    Individual,
    constraint_violation,
    crowding_distance,
    evolve,
    fast_nondominated_sort,
    nsga2_solve,
    run_nsga2,
)
from pareto_homotopy.problems import EvalCounters


def ind(f, v=0.0):
    return Individual(np.zeros(1), np.asarray(f, dtype=float), v)


def cdom(a, b):
    """Reference constraint-domination between two individuals."""
    if a.violation == 0 and b.violation > 0:
        return True
    if a.violation > 0 and b.violation > 0:
        return a.violation < b.violation
    if a.violation > 0:
        return False
    return all(x <= y for x, y in zip(a.f, b.f)) and any(x < y for x, y in zip(a.f, b.f))


def reference_sort(pop):
    """Peel off nondominated layers by direct pairwise checks."""
    left = set(range(len(pop)))
    fronts = []
    while left:
        layer = sorted(i for i in left if not any(cdom(pop[j], pop[i]) for j in left if j != i))
        fronts.append(layer)
        left -= set(layer)
    return fronts


def reference_crowding(F):
    k, p = len(F), len(F[0])
    d = [0.0] * k
    if k <= 2:
        return [math.inf] * k
    for j in range(p):
        idx = sorted(range(k), key=lambda i: (F[i][j], i))
        lo, hi = F[idx[0]][j], F[idx[-1]][j]
        d[idx[0]] = d[idx[-1]] = math.inf
        for r in range(1, k - 1):
            if hi > lo and d[idx[r]] != math.inf:
                d[idx[r]] += (F[idx[r + 1]][j] - F[idx[r - 1]][j]) / (hi - lo)
    return d


def test_sort_small_example():
    pop = [ind((1, 2)), ind((2, 1)), ind((3, 3))]
    assert fast_nondominated_sort(pop) == [[0, 1], [2]]


def test_sort_infeasible_excluded_from_first_front():
    pop = [ind((1, 2)), ind((0, 0), v=0.5), ind((2, 1))]
    fronts = fast_nondominated_sort(pop)
    assert 1 not in fronts[0]
    assert fronts == [[0, 2], [1]]


def test_sort_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(50):
        F = rng.integers(0, 5, size=(20, 2)).astype(float)
        V = np.where(rng.random(20) < 0.3, rng.integers(1, 4, size=20).astype(float), 0.0)
        pop = [ind(f, v) for f, v in zip(F, V)]
        fronts = fast_nondominated_sort(pop)
        assert [sorted(fr) for fr in fronts] == reference_sort(pop)
        flat = sorted(i for fr in fronts for i in fr)
        assert flat == list(range(20))


def test_crowding_small_fronts():
    assert np.all(np.isinf(crowding_distance([ind((1, 2)), ind((2, 1))])))
    with pytest.raises(ValueError):
        crowding_distance([])


def test_crowding_evenly_spaced():
    pts = [ind((i, 10 - i)) for i in range(6)]
    d = crowding_distance(pts)
    assert np.isinf(d[0]) and np.isinf(d[-1])
    np.testing.assert_allclose(d[1:-1], d[1])
    assert np.isfinite(d[1])


def test_crowding_matches_reference():
    rng = np.random.default_rng(3)
    for _ in range(20):
        F = rng.random((10, 3))
        np.testing.assert_allclose(crowding_distance(list(F)), reference_crowding(F.tolist()))


def test_violation():
    v = constraint_violation([[1.0, -2.0]], [[0.05, -0.5]], 0.1)
    assert v[0] == pytest.approx(1.0 + 0.4)
    assert constraint_violation([[-1.0]], [[0.09]], 0.1)[0] == 0.0


def test_config_validation():
    for bad in ({"pop_size": 5}, {"pop_size": 2}, {"crossover_prob": 1.5}, {"delta_h": 0.0}):
        with pytest.raises(ValueError):
            GaConfig(**bad)


def test_ex1_best_individual(ex1):
    c = EvalCounters.zeros(2)
    rep = nsga2_solve(ex1, GaConfig(pop_size=100, generations=100, seed=42), counters=c)
    assert rep.ok
    np.testing.assert_allclose(rep.f, [0.75, 0.85], atol=1e-1)
    assert c.f == [100 * 101, 100 * 101]


def test_ex2_loose_equalities(ex2):
    rep = nsga2_solve(ex2, GaConfig(pop_size=100, generations=200, delta_h=0.1, seed=42))
    assert rep.extra["violation"] <= 0.1
    assert rep.f[0] <= 3.0
    assert np.max(np.abs(rep.h)) <= 0.1 + 1e-12


def test_reproducible_and_elitist(ex1):
    cfg = GaConfig(pop_size=20, generations=15, seed=5)
    a, b = run_nsga2(ex1, cfg), run_nsga2(ex1, cfg)
    np.testing.assert_array_equal(np.array([i.x for i in a.population]), np.array([i.x for i in b.population]))
    assert all(x >= y for x, y in zip(a.best_violation, a.best_violation[1:]))


def test_first_front_mutually_nondominated(ex2):
    fs = evolve(ex2, GaConfig(pop_size=40, generations=20, seed=1, delta_h=0.1))
    pop = [ind(e.f, e.params["violation"]) for e in fs]
    for i, a in enumerate(pop):
        for j, b in enumerate(pop):
            assert i == j or not cdom(a, b)


def test_no_feasible_individual_flagged(ex2):
    fs = evolve(ex2, GaConfig(pop_size=4, generations=0, seed=0, delta_h=1e-9))
    assert fs.notes
    assert not any(e.feasibility.feasible for e in fs)
