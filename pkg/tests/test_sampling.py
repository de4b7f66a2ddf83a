import numpy as np
import pytest

from pareto_homotopy.nsga2 import GaConfig, nsga2_solve
from pareto_homotopy.problems import EvalCounters, ProblemDefinition, ScalarFunction, evaluate_constraints
from pareto_homotopy.results import SolveReport
from pareto_homotopy.sampling import (
    MetricsRow,
    dominating_points,
    grid_feasibility_scan,
    metrics_report,
    nondominance_filter,
    projected_cloud,
    uniform_feasibility_scan,
    write_metrics_csv,
)


def brute_nondominated(P, tol=0.0):
    keep = []
    for i, a in enumerate(P):
        dominated = False
        for j, b in enumerate(P):
            if i != j and all(b[k] <= a[k] + tol for k in range(len(a))) and any(b[k] < a[k] - tol for k in range(len(a))):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


# ---- scans ------------------------------------------------------------------

def test_scan_monotone_in_eps(ex2):
    counts = [len(uniform_feasibility_scan(ex2, count=20_000, eps=e, seed=3)) for e in (0.01, 0.1, 1.0)]
    assert counts[0] <= counts[1] <= counts[2]
    assert counts[2] > 0


def test_scan_vacuous_filter():
    prob = ProblemDefinition(
        name="free",
        n=2,
        objectives=(ScalarFunction(lambda x: x[0]),),
        ineq_constraints=(ScalarFunction(lambda x: -1.0),),
        sampling_box=(np.zeros(2), np.ones(2)),
    )
    cloud = uniform_feasibility_scan(prob, count=500, eps=np.inf, seed=0)
    assert len(cloud) == 500 == cloud.meta["count"]


def test_scan_deterministic_and_chunk_independent(ex1):
    a = uniform_feasibility_scan(ex1, count=10_000, eps=0.5, seed=9)
    b = uniform_feasibility_scan(ex1, count=10_000, eps=0.5, seed=9)
    np.testing.assert_array_equal(a.X, b.X)
    for x in a.X[:50]:
        g, h = evaluate_constraints(ex1, x)
        assert np.all(g <= 0) and np.all(np.abs(h) <= 0.5)


def test_scan_rejects_bad_input(ex1):
    with pytest.raises(ValueError):
        uniform_feasibility_scan(ex1, count=0)
    with pytest.raises(ValueError):
        uniform_feasibility_scan(ex1, count=10, eps=0.0)


def test_grid_scan_shape_and_corners(ex1):
    cloud = grid_feasibility_scan(ex1, shape=(41, 21), eps=10.0)
    assert cloud.meta["count"] == 41 * 21
    with pytest.raises(ValueError):
        grid_feasibility_scan(ex1, shape=(10,))


def test_ex2_scan_fraction_small(ex2):
    cloud = uniform_feasibility_scan(ex2, count=50_000, eps=0.01, seed=0)
    assert len(cloud) / 50_000 < 0.01


# ---- projected cloud --------------------------------------------------------

def test_projected_cloud_retention(cloud_1000):
    for name, cloud in cloud_1000.items():
        assert cloud.meta["count"] == 1000
        assert len(cloud) >= 900
        assert np.all(cloud.G <= 1e-8)
        assert np.all(np.abs(cloud.H) <= 1e-6)
        assert cloud.report(0).feasible


def test_projected_cloud_deterministic(ex2):
    a = projected_cloud(ex2, count=20, seed=4)
    b = projected_cloud(ex2, count=20, seed=4, parallel=True)
    np.testing.assert_array_equal(a.X, b.X)


def test_projected_cloud_csv(tmp_path, ex1):
    cloud = projected_cloud(ex1, count=5, seed=0)
    path = tmp_path / "cloud.csv"
    cloud.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema: cloud-v1"
    assert lines[1] == "x1,x2,f1,f2,feasible"
    assert len(lines) == 2 + len(cloud)


# ---- nondominance -----------------------------------------------------------

def test_nondominance_examples():
    assert nondominance_filter([(1, 2), (2, 1)]) == [0, 1]
    assert nondominance_filter([(1, 1), (2, 2)]) == [0]
    assert nondominance_filter([]) == []


def test_nondominance_matches_brute_force_and_idempotent():
    rng = np.random.default_rng(0)
    for _ in range(100):
        P = rng.integers(0, 8, size=(50, 2)).astype(float)
        keep = nondominance_filter(P)
        assert keep == brute_nondominated(P.tolist())
        sub = P[keep]
        assert nondominance_filter(sub) == list(range(len(sub)))


def test_dominating_points():
    F = np.array([[0.0, 0.0], [1.0, 1.0], [0.9995, 1.0]])
    assert dominating_points(F, [1.0, 1.0], tol=1e-3).tolist() == [0]


# ---- metrics ----------------------------------------------------------------

def _rep(method, f_count):
    return SolveReport(method, "ex2_5d", {}, None, None, None, None, 0.0, True,
                       EvalCounters(f=[f_count, f_count], constraints=1, homotopy_map=2), 0.5)


def test_metrics_report():
    assert metrics_report([]) == []
    rows = metrics_report([_rep("wsm", 3), _rep("wsm", 4), _rep("homotopy", 1)])
    assert [r.method for r in rows] == ["wsm", "homotopy"]
    assert rows[0].counters.f == [7, 7] and rows[0].runs == 2
    assert rows[0].wall_time == pytest.approx(1.0)
    assert rows[1].counters.homotopy_map == 2


def test_metrics_nsga2_count(ex1):
    rep = nsga2_solve(ex1, GaConfig(pop_size=10, generations=4, seed=0))
    (row,) = metrics_report([rep])
    assert row.objective_evaluations == 10 * 5


def test_effective_evaluations():
    row = MetricsRow("homotopy", 0.0, EvalCounters(f=[5, 3], homotopy_map=40, homotopy_jacobian=30), {}, 1)
    assert row.objective_evaluations == 5
    assert row.effective_evaluations == 70


def test_metrics_csv_header(tmp_path):
    path = tmp_path / "m.csv"
    write_metrics_csv(metrics_report([_rep("wsm", 3)]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema: metrics-v1"
    assert lines[1] == (
        "method,runs,wall_time,f1_evals,f2_evals,constraint_evals,gradient_evals,hessian_evals,"
        "homotopy_map_evals,homotopy_jacobian_evals,kkt_residual,status"
    )
