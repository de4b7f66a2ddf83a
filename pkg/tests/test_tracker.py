import json

import numpy as np
import pytest

from pareto_homotopy.homotopy import (
    HomotopyState,
    NoStartSolutionError,
    assemble_homotopy,
    homotopy_jacobian,
    init_anchor,
    solve_t1_system,
)
from pareto_homotopy.problems import EvalCounters, evaluate_constraints
from pareto_homotopy.results import AllRunsFailedError
from pareto_homotopy.tracker import (
    CONVERGED,
    SingularPointError,
    TrackerConfig,
    adapt_step,
    correct,
    homotopy_solve,
    pareto_front_homotopy,
    predict,
    tangent,
    trace,
)

ITER = TrackerConfig.iterated_mode()


# ---- config ---------------------------------------------------------------

def test_config_defaults_and_validation():
    cfg = TrackerConfig()
    assert (cfg.alpha0, cfg.alpha_min, cfg.alpha_max) == (0.05, 1e-5, 0.2)
    assert (cfg.h_low, cfg.h_high, cfg.corrector_iters) == (0.01, 1.0, 1)
    assert ITER.iterated and not cfg.iterated
    with pytest.raises(ValueError):
        TrackerConfig(alpha0=0.5)
    with pytest.raises(ValueError):
        TrackerConfig(h_low=2.0)
    with pytest.raises(ValueError):
        TrackerConfig(eps_t=0.0)


# ---- tangent ----------------------------------------------------------------

def test_tangent_explicit_null_space():
    xi = tangent(np.array([[1.0, 0.0, 0.0]]))
    assert abs(xi[0]) <= 1e-14
    assert abs(np.linalg.norm(xi) - 1) <= 1e-14
    xi = tangent(np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(xi, [0.0, 1.0], atol=1e-15)
    assert np.linalg.det(np.vstack([[1.0, 0.0], xi])) > 0


def test_tangent_orientation_random():
    rng = np.random.default_rng(0)
    for k in (1, 3, 8):
        for _ in range(20):
            J = rng.normal(size=(k, k + 1))
            xi = tangent(J)
            assert np.linalg.norm(J @ xi) <= 1e-10 * (1 + np.linalg.norm(J))
            assert np.linalg.det(np.vstack([J, xi])) > 0


def test_tangent_rank_deficient():
    with pytest.raises(SingularPointError):
        tangent(np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))


def test_tangent_at_ex1_anchor_moves_t_down(ex1):
    a = init_anchor(ex1, [-1.0, 1.0], [0.5, 0.5])
    J = homotopy_jacobian(ex1, a, a.state(1.0))
    xi = tangent(J)
    assert np.linalg.norm(J @ xi) <= 1e-10
    path = trace(ex1, a, ITER)
    assert path.records[0].tangent[-1] < 0


# ---- predict ----------------------------------------------------------------

def test_predict_zero_step(ex2):
    st = HomotopyState(np.ones(5), np.array([0.4, 0.6]), np.ones(1), np.zeros(2), 0.7)
    xi = np.ones(11) / np.sqrt(11)
    np.testing.assert_array_equal(predict(st, xi, 0.0).flatten(), st.flatten())


def test_predict_basis_step():
    z = np.array([1.0, 2.0, 0.5, 0.5, 1.0, 0.0, 0.8])
    xi = np.zeros(7)
    xi[-1] = -1.0
    out = predict(z, xi, 0.1)
    np.testing.assert_array_equal(out[:-1], z[:-1])
    assert out[-1] == pytest.approx(0.7, abs=1e-15)


def test_predict_linearity_and_clamp():
    rng = np.random.default_rng(1)
    z = rng.normal(size=7)
    z[-1] = 0.5
    xi = rng.normal(size=7)
    xi[-1] = -abs(xi[-1])
    xi /= np.linalg.norm(xi)
    np.testing.assert_allclose(predict(z, xi, 0.2), predict(predict(z, xi, 0.1), xi, 0.1), atol=1e-15)
    up = np.zeros(7)
    up[-1] = 1.0
    assert predict(z, up, 3.0)[-1] == 1.0


# ---- correct ----------------------------------------------------------------

@pytest.fixture(scope="module")
def ex1_path(ex1):
    a = init_anchor(ex1, [-1.0, 1.0], [0.5, 0.5])
    return a, trace(ex1, a, ITER)


def test_correct_on_manifold_is_identity(ex1, ex1_path):
    a, _ = ex1_path
    # the feasible anchor is exactly on the manifold
    z1 = a.state(1.0).flatten()
    out, res, _ = correct(ex1, a, z1, ITER)
    np.testing.assert_allclose(out, z1, atol=1e-12)
    assert res <= 1e-14


def test_correction_orthogonal_to_tangent(ex1, ex1_path):
    a, path = ex1_path
    rec = path.records[2]
    z_pred = predict(rec.state_before.flatten(), rec.tangent, 0.1)
    xi = tangent(homotopy_jacobian(ex1, a, z_pred))
    one = TrackerConfig(corrector_iters=1)
    out, _, _ = correct(ex1, a, z_pred, one)
    assert abs(np.dot(out - z_pred, xi)) <= 1e-10


def test_correct_reduces_residual_near_t09(ex1, ex1_path):
    a, path = ex1_path
    rec = min(path.records, key=lambda r: abs(r.state_after.t - 0.9))
    z = rec.state_after.flatten()
    xi = tangent(homotopy_jacobian(ex1, a, z))
    # scale an Euler step so the predictor residual is about 1e-2
    alpha = 0.05
    for _ in range(60):
        res0 = np.linalg.norm(assemble_homotopy(ex1, a, predict(z, -abs(xi[-1]) / xi[-1] * xi, alpha)))
        if res0 >= 1e-2:
            break
        alpha *= 1.3
    z_pred = predict(z, -abs(xi[-1]) / xi[-1] * xi, alpha)
    assert 5e-3 <= res0 <= 5e-2
    _, res, _ = correct(ex1, a, z_pred, TrackerConfig(corrector_iters=3))
    assert res <= 1e-6


# ---- adapt_step -------------------------------------------------------------

def test_adapt_step_examples():
    cfg = TrackerConfig()
    assert adapt_step(0.05, 1e-3, cfg) == 0.1
    assert adapt_step(0.05, 5.0, TrackerConfig(alpha_min=1e-4)) == 0.025
    assert adapt_step(0.05, 0.5, cfg) == 0.05
    assert adapt_step(0.2, 1e-3, cfg) == 0.2
    assert adapt_step(1e-5, 5.0, cfg) == 1e-5


# ---- trace ------------------------------------------------------------------

def _check_final(prob, path):
    st = path.final_state
    g, h = evaluate_constraints(prob, st.x)
    assert path.outcome == CONVERGED
    assert np.max(np.abs(h)) <= 1e-5
    assert np.all(g <= 1e-8)
    assert np.all(st.u >= -1e-10)
    assert abs(1 - st.w.sum()) <= 1e-8
    assert path.final_kkt_residual <= 1e-4


def test_trace_ex2_first_start(ex2):
    a = init_anchor(ex2, [1, 2, 0, 1, 1], [0.4, 0.6])
    path = trace(ex2, a, ITER)
    _check_final(ex2, path)
    st = path.final_state
    np.testing.assert_allclose(st.x, [-0.1390, -0.0518, -0.5309, -0.4189, 1.5023], atol=2e-2)
    rep = homotopy_solve(ex2, [0.4, 0.6], x0=[1, 2, 0, 1, 1])
    np.testing.assert_allclose(rep.f, [2.7363, -0.4147], atol=2e-2)


def test_trace_ex2_feasible_start(ex2):
    rep = homotopy_solve(ex2, [0.4, 0.6], x0=[-2, 0, 0, 0, 4])
    assert rep.ok
    np.testing.assert_allclose(rep.f, [2.7231, -0.4058], atol=2e-2)
    assert rep.kkt_residual <= 1e-4
    _check_final(ex2, rep.extra["trace"])


def test_trace_ex1_any_anchor(ex1):
    # every start with g(x0) < 0 either converges to the unique point or is
    # rejected because its projection onto h = 0 leaves the g-interior
    rng = np.random.default_rng(0)
    solved = 0
    for x0 in rng.uniform([-4, -2], [4, 2], size=(150, 2)):
        if x0[0] ** 2 - 5 * x0[1] + 3 >= 0:
            continue
        rep = homotopy_solve(ex1, [0.5, 0.5], x0=x0)
        if "projection of x0" in rep.message:
            continue
        assert rep.ok, rep.message
        np.testing.assert_allclose(rep.f, [0.75, 0.85], atol=5e-2)
        solved += 1
    assert solved >= 10


def test_ex1_start_without_positive_multiplier(ex1):
    a = init_anchor(ex1, [1.0, 1.5], [0.5, 0.5])
    with pytest.raises(NoStartSolutionError):
        solve_t1_system(ex1, a)
    path = trace(ex1, a, ITER)
    assert path.outcome == "step_failure" and not path.records


def test_trace_invariants(ex2, ex1_path):
    a = init_anchor(ex2, [0.5] * 5, [0.4, 0.6])
    path = trace(ex2, a, ITER)
    for p in (path, ex1_path[1]):
        t = p.t_values
        assert t[0] == ITER.t0
        assert np.all(np.diff(t[1:]) <= 1e-12)
        assert abs(t[-1]) <= ITER.eps_t
        assert len(p.records) <= ITER.k_max
        for rec in p.records:
            assert rec.residual <= ITER.corrector_tol
            assert abs(rec.orientation) == 1


def test_single_correction_mode_converges(ex2):
    a = init_anchor(ex2, [1, 2, 0, 1, 1], [0.4, 0.6])
    path = trace(ex2, a, TrackerConfig())
    assert path.outcome == CONVERGED
    assert path.final_kkt_residual <= 1e-4


def test_trace_is_deterministic(ex2):
    a = init_anchor(ex2, [1, 2, 0, 1, 1], [0.4, 0.6])
    p1, p2 = trace(ex2, a, ITER), trace(ex2, a, ITER)
    assert len(p1.records) == len(p2.records)
    np.testing.assert_array_equal(p1.final_state.flatten(), p2.final_state.flatten())
    np.testing.assert_array_equal(p1.t_values, p2.t_values)


def test_max_iters_outcome(ex2):
    a = init_anchor(ex2, [1, 2, 0, 1, 1], [0.4, 0.6])
    path = trace(ex2, a, TrackerConfig.iterated_mode(k_max=2))
    assert path.outcome == "max_iters"
    assert len(path.records) == 2


def test_trace_jsonl(tmp_path, ex1_path):
    path = ex1_path[1]
    out = tmp_path / "trace.jsonl"
    path.to_jsonl(out)
    lines = out.read_text().splitlines()
    assert len(lines) == len(path.records)
    row = json.loads(lines[0])
    assert {"k", "t", "alpha", "residual", "orientation"} <= set(row)


def test_trace_counts_homotopy_evaluations(ex1):
    a = init_anchor(ex1, [-1.0, 1.0], [0.5, 0.5])
    c = EvalCounters.zeros(2)
    trace(ex1, a, ITER, c)
    assert c.homotopy_map > 0 and c.homotopy_jacobian > 0


# ---- front ------------------------------------------------------------------

def test_front_ex1_collapses(ex1):
    ws = [(a, 1 - a) for a in np.linspace(0.02, 0.98, 50)]
    reps = pareto_front_homotopy(ex1, ws)
    F = np.array([r.f for r in reps if r.ok])
    assert len(F) == 50
    assert np.max(np.abs(F - F[0])) <= 5e-2


def test_front_ex2_table_weight(ex2):
    (rep,) = pareto_front_homotopy(ex2, [(0.96, 0.04)])
    np.testing.assert_allclose(rep.f, [0.5561, 2.0819], atol=2e-2)


def test_front_permutation_and_parallel(ex2):
    ws = [(0.2, 0.8), (0.5, 0.5), (0.9, 0.1)]
    c1, c2 = EvalCounters.zeros(2), EvalCounters.zeros(2)
    a = pareto_front_homotopy(ex2, ws, counters=c1)
    b = pareto_front_homotopy(ex2, ws[::-1], counters=c2, parallel=True)
    for ra, rb in zip(a, b[::-1]):
        np.testing.assert_array_equal(ra.x, rb.x)
    assert c1 == c2


def test_front_rejects_nonpositive_weight(ex2):
    with pytest.raises(ValueError):
        pareto_front_homotopy(ex2, [(0.0, 1.0)])


def test_front_all_failed(ex1):
    # g(0, 0) = 3 > 0, so every anchor is rejected
    with pytest.raises(AllRunsFailedError) as info:
        pareto_front_homotopy(ex1, [(0.5, 0.5), (0.3, 0.7)], x0=[0.0, 0.0])
    assert len(info.value.reports) == 2


def test_solve_report_json_roundtrip(ex1):
    rep = homotopy_solve(ex1, [0.5, 0.5])
    d = json.loads(rep.to_json())
    assert d["method"] == "homotopy" and d["status"] == "ok"
    assert "trace" not in d["extra"]
