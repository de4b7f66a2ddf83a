"""Predictor-corrector tracking of the homotopy path from t = 1 to t = 0."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .homotopy import (
    Anchor,
    HomotopyDomainError,
    HomotopyState,
    Layout,
    NoStartSolutionError,
    StartSystemError,
    _omega_newton,
    assemble_homotopy,
    homotopy_jacobian,
    init_anchor,
    kkt_residual,
    solve_t1_system,
)
from .problems import EvalCounters, ProblemDefinition, evaluate_constraints, evaluate_objectives, feasibility_report
from .results import AllRunsFailedError, SolveReport

CONVERGED = "converged"
MAX_ITERS = "max_iters"
STEP_FAILURE = "step_failure"


class SingularPointError(np.linalg.LinAlgError):
    def __init__(self, sigma_min: float):
        super().__init__(f"Jacobian is rank deficient (smallest singular value {sigma_min:.3e})")
        self.sigma_min = sigma_min


class StepFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    alpha0: float = 0.05
    alpha_min: float = 1e-5
    alpha_max: float = 0.2
    eps_t: float = 1e-6
    k_max: int = 5000
    # 1 reproduces a single Newton correction per step; >1 iterates to corrector_tol
    corrector_iters: int = 1
    corrector_tol: float = 1e-10
    backtrack_max: int = 30
    h_low: float = 0.01
    h_high: float = 1.0
    t0: float = 1.0
    start_solve: bool = True
    endgame: bool = True
    endgame_tol: float = 1e-12
    endgame_max_iter: int = 50

    def __post_init__(self):
        if not 0 < self.alpha_min <= self.alpha0 <= self.alpha_max:
            raise ValueError("require 0 < alpha_min <= alpha0 <= alpha_max")
        if self.eps_t <= 0:
            raise ValueError("eps_t must be positive")
        if not self.h_low < self.h_high:
            raise ValueError("require h_low < h_high")
        if not 0 < self.t0 <= 1:
            raise ValueError("t0 must lie in (0, 1]")
        if self.corrector_iters < 1:
            raise ValueError("corrector_iters must be >= 1")

    @property
    def iterated(self) -> bool:
        return self.corrector_iters > 1

    @classmethod
    def iterated_mode(cls, **overrides) -> "TrackerConfig":
        """Corrector iterates until ``corrector_tol``; used by the CLI and benchmarks."""
        return cls(**{"corrector_iters": 8, **overrides})


@dataclass
class StepRecord:
    k: int
    state_before: HomotopyState
    state_after: HomotopyState
    tangent: np.ndarray
    alpha: float
    residual: float
    orientation: int
    backtracks: int = 0
    regularized: bool = False

    def summary(self) -> dict:
        return {
            "k": self.k,
            "t": self.state_after.t,
            "alpha": self.alpha,
            "residual": self.residual,
            "orientation": self.orientation,
        }


@dataclass
class PathTrace:
    records: list = field(default_factory=list)
    outcome: str = MAX_ITERS
    final_state: Optional[HomotopyState] = None
    final_kkt_residual: float = float("nan")
    start_state: Optional[HomotopyState] = None
    message: str = ""

    @property
    def t_values(self) -> np.ndarray:
        """Start t followed by the t of every accepted step."""
        head = [self.start_state.t] if self.start_state is not None else []
        return np.array(head + [r.state_after.t for r in self.records])

    def to_jsonl(self, path) -> None:
        """One JSON object per step: k, t, alpha, residual, orientation."""
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.summary()) + "\n")


def tangent(J: np.ndarray, previous_tangent: Optional[np.ndarray] = None) -> np.ndarray:
    """Unit null vector of ``J`` with ``det([J; xi]) > 0``.

    When the determinant is too small to trust, the sign is chosen to agree
    with ``previous_tangent`` instead.
    """
    J = np.asarray(J, dtype=float)
    k, cols = J.shape
    if cols <= k:
        raise ValueError("tangent expects a wide k x c Jacobian with c > k")
    _, sigma, vt = np.linalg.svd(J)
    scale = sigma[0] if sigma.size and sigma[0] > 0 else 1.0
    if sigma.size and sigma[-1] <= 1e-10 * scale:
        raise SingularPointError(float(sigma[-1]))
    xi = vt[-1].copy()
    xi /= np.linalg.norm(xi)
    if cols != k + 1:
        # null space wider than a curve; the determinant is undefined
        if previous_tangent is not None and np.dot(xi, previous_tangent) < 0:
            xi = -xi
        return xi

    aug = np.vstack([J, xi])
    sign, logdet = np.linalg.slogdet(aug)
    row_norms = np.linalg.norm(aug, axis=1)
    # |det| relative to the Hadamard bound of the augmented matrix
    rel = np.exp(logdet - np.sum(np.log(row_norms))) if sign != 0 else 0.0
    if rel < 1e-12:
        if previous_tangent is not None and np.dot(xi, previous_tangent) < 0:
            xi = -xi
        return xi
    return xi if sign > 0 else -xi


def predict(state, xi: np.ndarray, alpha: float):
    """Euler step ``z + alpha * xi`` on the flat vector; ``t`` is clamped to 1."""
    flat = isinstance(state, np.ndarray)
    z = np.asarray(state, dtype=float) if flat else state.flatten()
    z_new = z + alpha * np.asarray(xi, dtype=float)
    z_new[-1] = min(z_new[-1], 1.0)
    if flat:
        return z_new
    n_w = state.w.size
    n_u = state.u.size
    n_x = state.x.size
    layout = Layout(n_x, n_w, n_u, state.v.size)
    return HomotopyState.from_flat(layout, z_new)


def _min_norm_step(J: np.ndarray, r: np.ndarray):
    """``-J^T (J J^T)^{-1} r``; ridge-regularised when ``J J^T`` is near singular."""
    JJt = J @ J.T
    regularized = False
    if np.linalg.cond(JJt) > 1e14:
        JJt = JJt + 1e-12 * np.trace(JJt) * np.eye(JJt.shape[0])
        regularized = True
    y = np.linalg.solve(JJt, r)
    return -J.T @ y, regularized


def correct(problem, anchor: Anchor, state_pred, cfg: TrackerConfig, counters: EvalCounters | None = None):
    """Minimum-norm Gauss-Newton correction back onto ``H = 0``.

    Returns ``(state, residual_norm, regularized)``; raises ``StepFailure`` when
    backtracking cannot keep the residual from growing.
    """
    L = Layout.of(problem)
    flat = isinstance(state_pred, np.ndarray)
    z = np.array(state_pred if flat else state_pred.flatten(), dtype=float)
    r = assemble_homotopy(problem, anchor, z, counters)
    res = float(np.linalg.norm(r))
    regularized = False
    for _ in range(cfg.corrector_iters):
        if res <= cfg.corrector_tol:
            break
        J = homotopy_jacobian(problem, anchor, z, counters)
        dz, reg = _min_norm_step(J, r)
        regularized = regularized or reg
        lam = 1.0
        for _ in range(cfg.backtrack_max + 1):
            trial = z + lam * dz
            if np.all(trial[L.w] >= 0) and np.all(trial[L.u] >= 0):
                r_trial = assemble_homotopy(problem, anchor, trial, counters)
                res_trial = float(np.linalg.norm(r_trial))
                if res_trial <= res:
                    z, r, res = trial, r_trial, res_trial
                    break
            lam *= 0.5
        else:
            raise StepFailure(f"correction could not reduce the residual (|H| = {res:.3e})")
    out = z if flat else HomotopyState.from_flat(L, z)
    return out, res, regularized


def adapt_step(alpha: float, residual_norm: float, cfg: TrackerConfig) -> float:
    if residual_norm < cfg.h_low:
        alpha = min(cfg.alpha_max, 2 * alpha)
    elif residual_norm > cfg.h_high:
        alpha = max(cfg.alpha_min, alpha / 2)
    return float(min(max(alpha, cfg.alpha_min), cfg.alpha_max))


def trace(problem: ProblemDefinition, anchor: Anchor, cfg: TrackerConfig | None = None,
          counters: EvalCounters | None = None) -> PathTrace:
    """Follow the zero curve of the homotopy from ``t0`` down to ``t = 0``."""
    cfg = cfg or TrackerConfig()
    L = Layout.of(problem)
    out = PathTrace()

    start = anchor.state(cfg.t0)
    if cfg.start_solve and cfg.t0 == 1.0:
        try:
            start = solve_t1_system(problem, anchor, counters=counters)
        except NoStartSolutionError as exc:
            out.start_state = out.final_state = exc.state
            out.outcome, out.message = STEP_FAILURE, str(exc)
            return out
        except StartSystemError as exc:
            # track from the best iterate; the corrector keeps pulling it in
            start = exc.state
    out.start_state = start
    z = start.flatten()
    res = float(np.linalg.norm(assemble_homotopy(problem, anchor, z, counters)))
    alpha = cfg.alpha0
    orientation = 0
    prev_raw = None

    k = 0
    # a corrector may push t slightly below 0; that also counts as arrival
    while z[-1] > cfg.eps_t and k < cfg.k_max:
        try:
            J = homotopy_jacobian(problem, anchor, z, counters)
            raw = tangent(J, prev_raw)
        except (SingularPointError, HomotopyDomainError) as exc:
            out.outcome, out.message = STEP_FAILURE, str(exc)
            break
        if orientation == 0:
            # fix the global sign so the path leaves t = t0 downward
            orientation = -1 if raw[-1] > 0 else 1
        xi = orientation * raw
        prev_raw = raw

        next_alpha = adapt_step(alpha, res, cfg)
        alpha_try = alpha
        backtracks = 0
        accepted = None
        while accepted is None:
            step = alpha_try
            if xi[-1] < 0 and z[-1] + step * xi[-1] < 0:
                step = z[-1] / -xi[-1]
            z_pred = predict(z, xi, step)
            try:
                z_new, res_new, reg = correct(problem, anchor, z_pred, cfg, counters)
                ok = (not cfg.iterated or res_new <= cfg.corrector_tol) and (
                    k == 0 or z_new[-1] <= z[-1] + 1e-12
                )
            except (StepFailure, HomotopyDomainError, np.linalg.LinAlgError):
                ok = False
            if ok:
                accepted = (z_new, res_new, reg, step)
                break
            backtracks += 1
            alpha_try /= 2
            if alpha_try < cfg.alpha_min:
                break
        if accepted is None:
            out.outcome = STEP_FAILURE
            out.message = f"step size fell below alpha_min at t = {z[-1]:.6g}"
            break

        z_new, res_new, reg, step = accepted
        k += 1
        out.records.append(
            StepRecord(
                k=k,
                state_before=HomotopyState.from_flat(L, z),
                state_after=HomotopyState.from_flat(L, z_new),
                tangent=xi,
                alpha=step,
                residual=res_new,
                orientation=orientation,
                backtracks=backtracks,
                regularized=reg,
            )
        )
        z, res = z_new, res_new
        alpha = next_alpha if backtracks == 0 else min(next_alpha, alpha_try)

    if out.outcome != STEP_FAILURE:
        out.outcome = CONVERGED if z[-1] <= cfg.eps_t else MAX_ITERS
    if out.outcome == CONVERGED and cfg.endgame:
        z, _ = _omega_newton(problem, anchor, z, 0.0, cfg.endgame_tol, cfg.endgame_max_iter, counters, project=True)
    final = HomotopyState.from_flat(L, z)
    out.final_state = final
    out.final_kkt_residual = kkt_residual(problem, final.x, final.w, final.u, final.v)
    return out


def homotopy_solve(problem: ProblemDefinition, w, x0=None, u0=None, cfg: TrackerConfig | None = None,
                   counters: EvalCounters | None = None) -> SolveReport:
    """One weight, one trace, packaged as a report."""
    cfg = cfg or TrackerConfig.iterated_mode()
    run = EvalCounters.zeros(problem.p)
    x0 = problem.anchor_x0 if x0 is None else np.asarray(x0, dtype=float)
    w = np.asarray(w, dtype=float)
    started = time.perf_counter()
    params = {"w": w.tolist(), "x0": x0.tolist()}
    try:
        anchor = init_anchor(problem, x0, w, u0)
        path = trace(problem, anchor, cfg, run)
    except Exception as exc:  # anchor validation or evaluation failure
        report = SolveReport.failure("homotopy", problem.name, params, str(exc), run, time.perf_counter() - started)
    else:
        st = path.final_state
        f = evaluate_objectives(problem, st.x, run)
        g, h = evaluate_constraints(problem, st.x)
        report = SolveReport(
            method="homotopy",
            problem=problem.name,
            params=params,
            x=st.x,
            f=f,
            g=g,
            h=h,
            kkt_residual=path.final_kkt_residual,
            feasible=feasibility_report(problem, st.x, tol_g=1e-8, tol_h=1e-5).feasible,
            counters=run,
            wall_time=time.perf_counter() - started,
            status="ok" if path.outcome == CONVERGED else "failed",
            message=path.outcome if not path.message else f"{path.outcome}: {path.message}",
            extra={"trace": path, "multipliers": {"w": st.w, "u": st.u, "v": st.v}, "steps": len(path.records)},
        )
    if counters is not None:
        counters.merge(run)
    return report


def pareto_front_homotopy(problem: ProblemDefinition, weight_list, x0=None, u0=None,
                          cfg: TrackerConfig | None = None, counters: EvalCounters | None = None,
                          parallel: bool = False, max_workers: int | None = None) -> list:
    """One trace per weight vector; reports come back in input order."""
    weights = [np.asarray(w, dtype=float) for w in weight_list]
    for w in weights:
        if np.any(w <= 0):
            raise ValueError("homotopy weights must be strictly positive")

    def run(w):
        return homotopy_solve(problem, w, x0=x0, u0=u0, cfg=cfg)

    if parallel:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(run, weights))
    else:
        reports = [run(w) for w in weights]
    if counters is not None:
        for rep in reports:
            counters.merge(rep.counters)
    if reports and all(not rep.ok for rep in reports):
        raise AllRunsFailedError("homotopy failed for every weight", reports)
    return reports
