"""Solver reports and Pareto-front containers with CSV/JSON output."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problems import EvalCounters, FeasibilityReport, feasibility_report

FRONT_SCHEMA = "front-v1"


class AllRunsFailedError(RuntimeError):
    """Every parameter of a sweep failed; ``reports`` keeps the per-run details."""

    def __init__(self, message: str, reports=None):
        super().__init__(message)
        self.reports = list(reports or [])


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return repr(value)


@dataclass
class SolveReport:
    method: str
    problem: str
    params: dict
    x: Optional[np.ndarray]
    f: Optional[np.ndarray]
    g: Optional[np.ndarray]
    h: Optional[np.ndarray]
    kkt_residual: float
    feasible: bool
    counters: EvalCounters
    wall_time: float
    status: str = "ok"
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def failure(cls, method, problem, params, message, counters, wall_time) -> "SolveReport":
        return cls(
            method=method,
            problem=problem,
            params=params,
            x=None,
            f=None,
            g=None,
            h=None,
            kkt_residual=float("nan"),
            feasible=False,
            counters=counters,
            wall_time=wall_time,
            status="failed",
            message=message,
        )

    def to_dict(self) -> dict:
        """JSON-ready dictionary; bulky extras such as path traces are dropped."""
        extra = {k: v for k, v in self.extra.items() if k not in ("trace", "run")}
        kkt = self.kkt_residual
        return {
            "method": self.method,
            "problem": self.problem,
            "params": _jsonable(self.params),
            "status": self.status,
            "message": self.message,
            "x": _jsonable(self.x),
            "f": _jsonable(self.f),
            "g": _jsonable(self.g),
            "h": _jsonable(self.h),
            "kkt_residual": None if kkt is None or not np.isfinite(kkt) else float(kkt),
            "feasible": bool(self.feasible),
            "counters": self.counters.as_dict(),
            "wall_time": float(self.wall_time),
            "extra": _jsonable(extra),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text


@dataclass
class FrontEntry:
    x: np.ndarray
    f: np.ndarray
    method: str
    params: dict
    feasibility: FeasibilityReport
    kkt_residual: float = float("nan")


def dominates(a, b, tol: float = 0.0) -> bool:
    """``a`` dominates ``b``: no worse by more than ``tol`` anywhere, better by ``tol`` somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(a <= b + tol) and np.any(a < b - tol))


def nondominated_indices(F, tol: float = 0.0) -> list:
    """Indices of rows of ``F`` not dominated by any other row (quadratic scan)."""
    F = np.asarray(F, dtype=float)
    if F.size == 0:
        return []
    if F.ndim != 2:
        raise ValueError("expected an (N, p) array of objective vectors")
    keep = []
    for i in range(F.shape[0]):
        better = np.all(F <= F[i] + tol, axis=1) & np.any(F < F[i] - tol, axis=1)
        better[i] = False
        if not better.any():
            keep.append(i)
    return keep


@dataclass
class FrontSet:
    entries: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    # every run behind the set, failed ones included, in parameter order
    reports: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def F(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0))
        return np.array([e.f for e in self.entries])

    @property
    def X(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0))
        return np.array([e.x for e in self.entries])

    def nondominated(self, tol: float = 1e-6, collapse: bool = True) -> "FrontSet":
        """Drop dominated entries; with ``collapse`` also drop entries whose
        objectives repeat an earlier kept entry within ``tol``."""
        keep = nondominated_indices(self.F, tol) if self.entries else []
        if collapse:
            uniq = []
            for i in keep:
                if all(np.max(np.abs(self.entries[i].f - self.entries[j].f)) > tol for j in uniq):
                    uniq.append(i)
            keep = uniq
        return FrontSet([self.entries[i] for i in keep], list(self.notes), list(self.reports))

    def to_csv(self, path) -> None:
        """Columns: method, params, x*, f*, g*, h*, kkt_residual, feasible.

        The first line is a ``# schema`` comment naming the column version.
        """
        if self.entries:
            e0 = self.entries[0]
            n, p = len(e0.x), len(e0.f)
            m, s = len(e0.feasibility.g_values), len(e0.feasibility.h_values)
        else:
            n = p = m = s = 0
        header = (
            ["method", "params"]
            + [f"x{i + 1}" for i in range(n)]
            + [f"f{i + 1}" for i in range(p)]
            + [f"g{i + 1}" for i in range(m)]
            + [f"h{i + 1}" for i in range(s)]
            + ["kkt_residual", "feasible"]
        )
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: {FRONT_SCHEMA}\n")
            writer = csv.writer(fh)
            writer.writerow(header)
            for e in self.entries:
                writer.writerow(
                    [e.method, json.dumps(_jsonable(e.params), sort_keys=True)]
                    + [repr(float(v)) for v in e.x]
                    + [repr(float(v)) for v in e.f]
                    + [repr(float(v)) for v in e.feasibility.g_values]
                    + [repr(float(v)) for v in e.feasibility.h_values]
                    + [repr(float(e.kkt_residual)), int(e.feasibility.feasible)]
                )


def front_from_reports(problem, reports, tol_g: float = 1e-6, tol_h: float = 1e-5) -> FrontSet:
    """Successful reports become entries; failures become notes."""
    front = FrontSet(reports=list(reports))
    for rep in reports:
        if rep.ok:
            front.entries.append(
                FrontEntry(
                    x=rep.x,
                    f=rep.f,
                    method=rep.method,
                    params=rep.params,
                    feasibility=feasibility_report(problem, rep.x, tol_g=tol_g, tol_h=tol_h),
                    kkt_residual=rep.kkt_residual,
                )
            )
        else:
            front.notes.append(f"{rep.method} {rep.params}: {rep.message}")
    return front


def read_front_csv(path) -> tuple:
    """Return ``(schema, header, rows)``; rows are lists of strings."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        schema = first.split(":", 1)[1].strip() if first.startswith("# schema") else None
        if schema is None:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return schema, header, rows
