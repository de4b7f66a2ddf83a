import numpy as np
import pytest

from pareto_homotopy import get_problem, projected_cloud


@pytest.fixture(scope="session")
def ex1():
    return get_problem("ex1_2d")


@pytest.fixture(scope="session")
def ex2():
    return get_problem("ex2_5d")


@pytest.fixture(scope="session")
def cloud_1000(ex1, ex2):
    """Projected feasible clouds shared by the scalarization tests."""
    return {p.name: projected_cloud(p, count=1000, seed=0) for p in (ex1, ex2)}


@pytest.fixture(scope="session")
def ex1_pareto_oracle():
    """Unique nondominated point of ex1_2d from a dense scan of its feasible curve.

    On h = 0 the feasible set is x1 = -x2**4 with x2**8 - 5 x2 + 3 <= 0,
    a single arc in x2, so a one-dimensional scan is exhaustive.
    """
    x2 = np.linspace(0.0, 2.0, 2_000_001)
    x2 = x2[x2**8 - 5 * x2 + 3 <= 0]
    x1 = -(x2**4)
    f1 = x1**2 + 2 * x2**2
    f2 = -3 * x1 + x2**2 - x1 * x2
    # f1 and f2 both increase along the arc, so its left end is the only nondominated point
    i = int(np.argmin(f1 + f2))
    return np.array([x1[i], x2[i]]), np.array([f1[i], f2[i]])


@pytest.fixture(scope="session")
def bench_results():
    """Bench runs with registered defaults, shared by the bench and acceptance tests."""
    from pareto_homotopy.bench import run_bench

    return {name: run_bench(name) for name in ("ex1_2d", "ex2_5d")}
