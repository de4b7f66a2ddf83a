import numpy as np
import pytest

from pareto_homotopy.problems import (
    DimensionError,
    EvalCounters,
    NonFiniteError,
    ProblemDefinition,
    ScalarFunction,
    UnknownProblemError,
    as_vector,
    evaluate_batch,
    evaluate_constraints,
    evaluate_objectives,
    fd_gradient,
    feasibility_report,
    get_problem,
    hessians,
    jacobians,
    list_problems,
)


def test_registry_dimensions(ex1, ex2):
    assert (ex2.n, ex2.p, ex2.m, ex2.s) == (5, 2, 1, 2)
    assert (ex1.n, ex1.p, ex1.m, ex1.s) == (2, 2, 1, 1)
    assert list_problems() == ["ex1_2d", "ex2_5d"]
    assert ex1.has_analytic_gradients and ex1.has_analytic_hessians
    assert ex2.has_analytic_gradients and ex2.has_analytic_hessians


def test_unknown_problem_lists_available():
    with pytest.raises(UnknownProblemError, match="ex1_2d"):
        get_problem("nonexistent")


def test_objectives_hand_values(ex1, ex2):
    np.testing.assert_allclose(evaluate_objectives(ex2, [1, 2, 0, 1, 1]), [7, 7])
    np.testing.assert_allclose(evaluate_objectives(ex1, [-1, 1]), [3, 5])
    np.testing.assert_allclose(evaluate_objectives(ex1, [0, 0]), [0, 0])


def test_constraints_hand_values(ex1, ex2):
    g, h = evaluate_constraints(ex1, [-1, 1])
    np.testing.assert_allclose(g, [-1])
    np.testing.assert_allclose(h, [0])
    g, h = evaluate_constraints(ex2, [1, 2, 0, 1, 1])
    np.testing.assert_allclose(h, [1.1, 3.5])
    np.testing.assert_allclose(g, [-4])


@pytest.mark.parametrize(
    "x, h1, h2, g",
    [
        ((0.3077, 0.5374, -0.2703, -0.1336, 0.2804), -0.1011, 0.0, -9.5256),
        ((-1.3074, -2.8605, -1.0470, 0.4103, 0.4475), 1.08e-4, -7.7391, 1.1563),
    ],
)
def test_constraints_at_tabulated_points(ex2, x, h1, h2, g):
    gv, hv = evaluate_constraints(ex2, x)
    assert abs(hv[0] - h1) <= 1e-3
    assert abs(hv[1] - h2) <= 1e-3
    assert abs(gv[0] - g) <= 1e-3


def test_dimension_mismatch(ex1):
    with pytest.raises(DimensionError):
        evaluate_objectives(ex1, [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        evaluate_constraints(ex1, [1.0])


def test_non_finite_reports_index():
    prob = ProblemDefinition(
        name="bad",
        n=1,
        objectives=(ScalarFunction(lambda x: x[0]), ScalarFunction(lambda x: np.log(x[0]))),
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        with pytest.raises(NonFiniteError) as info:
            evaluate_objectives(prob, [-1.0])
    assert info.value.index == 1


def test_jacobian_symbolic_values(ex1):
    Jf, Jg, Jh = jacobians(ex1, [-1.0, 1.0])
    np.testing.assert_allclose(Jf[0], [-2, 4])
    np.testing.assert_allclose(Jh[0], [1, 4])
    np.testing.assert_allclose(Jg[0], [-2, -5])


def test_hessian_symbolic_values(ex1):
    hs = hessians(ex1, [0.3, 1.0])
    np.testing.assert_allclose(hs.f[0], np.diag([2.0, 4.0]))
    np.testing.assert_allclose(hs.h[0], [[0, 0], [0, 12]])
    assert not hs.finite_difference


def test_linear_constraint_hessian_is_zero(ex2):
    hs = hessians(ex2, np.ones(5))
    np.testing.assert_array_equal(hs.h[1], np.zeros((5, 5)))


@pytest.mark.parametrize("name", ["ex1_2d", "ex2_5d"])
def test_gradients_match_finite_differences(name):
    prob = get_problem(name)
    rng = np.random.default_rng(3)
    lo, hi = prob.sampling_box
    for x in rng.uniform(lo, hi, size=(100, prob.n)):
        J = np.vstack(jacobians(prob, x))
        for row, fn in zip(J, prob.functions):
            fd = fd_gradient(fn.fun, x)
            assert np.linalg.norm(row - fd) <= 1e-5 * max(1.0, np.linalg.norm(fd))


@pytest.mark.parametrize("name", ["ex1_2d", "ex2_5d"])
def test_hessians_match_gradient_differences(name):
    prob = get_problem(name)
    rng = np.random.default_rng(4)
    lo, hi = prob.sampling_box
    for x in rng.uniform(lo, hi, size=(30, prob.n)):
        hs = hessians(prob, x)
        for H, fn in zip(hs.f + hs.g + hs.h, prob.functions):
            fd = np.column_stack([fd_gradient(lambda z, i=i: fn.grad(z)[i], x) for i in range(prob.n)]).T
            assert np.linalg.norm(H - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


def test_missing_hessian_uses_finite_differences_and_is_flagged():
    prob = ProblemDefinition(
        name="quad",
        n=2,
        objectives=(ScalarFunction(lambda x: x[0] ** 2 + 3 * x[0] * x[1], lambda x: np.array([2 * x[0] + 3 * x[1], 3 * x[0]])),),
    )
    hs = hessians(prob, [0.5, -1.0])
    assert hs.finite_difference
    np.testing.assert_allclose(hs.f[0], [[2, 3], [3, 0]], atol=1e-6)


def test_asymmetric_analytic_hessian_rejected():
    prob = ProblemDefinition(
        name="skew",
        n=2,
        objectives=(ScalarFunction(lambda x: x[0], lambda x: np.array([1.0, 0.0]), lambda x: np.array([[0, 1.0], [0, 0]])),),
    )
    with pytest.raises(ValueError, match="symmetric"):
        hessians(prob, [0.0, 0.0])


def test_counters_count_calls(ex2):
    c = EvalCounters.zeros(2)
    for _ in range(7):
        evaluate_objectives(ex2, np.zeros(5), c)
    evaluate_constraints(ex2, np.zeros(5), c)
    jacobians(ex2, np.zeros(5), c)
    hessians(ex2, np.zeros(5), c)
    assert c.f == [7, 7]
    assert (c.constraints, c.gradients, c.hessians) == (1, 1, 1)


def test_counters_add_and_merge():
    a = EvalCounters(f=[1, 2], constraints=3, gradients=4, hessians=5, homotopy_map=6, homotopy_jacobian=7)
    b = EvalCounters(f=[10, 20], constraints=30, gradients=40, hessians=50, homotopy_map=60, homotopy_jacobian=70)
    total = a + b
    assert total.as_dict() == {
        "f": [11, 22], "constraints": 33, "gradients": 44, "hessians": 55,
        "homotopy_map": 66, "homotopy_jacobian": 77,
    }
    a.merge(b)
    assert a == total


def test_feasibility_report_table_starts(ex2):
    rep = feasibility_report(ex2, [1, 2, 0, 1, 1], tol_h=1e-6)
    assert not rep.feasible and rep.g_ok and not rep.h_ok
    assert feasibility_report(ex2, [-2, 0, 0, 0, 4], tol_h=1e-6).feasible


def test_feasibility_report_active_set_and_idempotence(ex1):
    # g(x) = x1^2 - 5 x2 + 3 vanishes at (1, 0.8)
    rep = feasibility_report(ex1, [1.0, 0.8])
    assert rep.active_set == (0,)
    assert rep == feasibility_report(ex1, [1.0, 0.8])


def test_feasibility_report_rejects_bad_tolerance(ex1):
    with pytest.raises(ValueError):
        feasibility_report(ex1, [0.0, 0.0], tol_g=0.0)


def test_feasibility_report_counts_constraints_only(ex1):
    c = EvalCounters.zeros(2)
    feasibility_report(ex1, [0.0, 0.0], counters=c)
    assert c.f == [0, 0] and c.constraints == 1


def test_batch_matches_pointwise(ex2):
    X = np.random.default_rng(0).uniform(-5, 5, size=(20, 5))
    c = EvalCounters.zeros(2)
    F, G, H = evaluate_batch(ex2, X, c)
    for i, x in enumerate(X):
        np.testing.assert_allclose(F[i], evaluate_objectives(ex2, x))
        g, h = evaluate_constraints(ex2, x)
        np.testing.assert_allclose(G[i], g)
        np.testing.assert_allclose(H[i], h)
    assert c.f == [20, 20] and c.constraints == 20


def test_invalid_box_rejected():
    with pytest.raises(ValueError):
        ProblemDefinition(name="b", n=1, objectives=(ScalarFunction(lambda x: x[0]),), sampling_box=([1.0], [0.0]))


def test_as_vector():
    np.testing.assert_array_equal(as_vector("1, 2,3"), [1, 2, 3])
    np.testing.assert_array_equal(as_vector([0.5]), [0.5])
