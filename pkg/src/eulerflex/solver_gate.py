"""Solver-agnostic gate: solve a sparse LP and re-validate the returned point.

The gate is deliberately thin: the built-in backends are the HiGHS family
exposed through :func:`scipy.optimize.linprog` (``highs`` auto-selects,
``highs-ds`` dual simplex, ``highs-ipm`` interior point with crossover), and
every accepted solution is independently re-checked against the LP triplets,
row by row, regardless of what the backend reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import SolverError, ValidationError
from .macro_lp import SENSE_EQ, SENSE_LE, MacroSolution, SparseLP, extract_solution

__all__ = ["SolveReport", "solve_arrays", "solve", "validate_solution", "RESIDUAL_TOL"]

RESIDUAL_TOL = 1e-6  # absolute, per row normalized by max(1, row inf-norm)

BACKENDS = ("highs", "highs-ds", "highs-ipm")


@dataclass
class SolveReport:
    """Outcome of one solve, including independently computed residuals."""

    status: str  # optimal | infeasible | unbounded | time_limit | failed
    objective: Optional[float]
    backend: str
    wall_time_s: float
    iterations: int = 0
    residuals: dict = field(default_factory=dict)
    max_residual: Optional[float] = None
    message: str = ""
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "backend": self.backend,
            "wall_time_s": self.wall_time_s,
            "iterations": self.iterations,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "max_residual": self.max_residual,
            "message": self.message,
            "diagnostics": self.diagnostics,
        }


def _split_constraints(lp: SparseLP):
    coo = sp.coo_matrix((lp.values, (lp.rows, lp.cols)), shape=(lp.n_rows, lp.n_vars))
    csr = coo.tocsr()
    eq_mask = lp.senses == SENSE_EQ
    le_mask = lp.senses == SENSE_LE
    A_eq = csr[eq_mask] if eq_mask.any() else None
    A_ub = csr[le_mask] if le_mask.any() else None
    return A_ub, (lp.rhs[le_mask] if le_mask.any() else None), A_eq, (
        lp.rhs[eq_mask] if eq_mask.any() else None
    )


def _feasibility_hints(lp: SparseLP) -> dict:
    hints = {}
    meta = lp.meta
    if "net_load" in meta:
        net = np.asarray(meta["net_load"])
        over = net > meta["pg_max"] + 1e-9
        under = net < meta["pg_min"] - 1e-9
        if over.any():
            hints["base_net_exceeds_pg_max_at_steps"] = np.flatnonzero(over)[:5].tolist()
        if under.any():
            hints["base_net_below_pg_min_at_steps"] = np.flatnonzero(under)[:5].tolist()
        if not meta.get("u_box_contains_zero", True):
            hints["idle_power_outside_device_limits"] = True
    bad = lp.lower > lp.upper + 1e-15
    if bad.any():
        hints["inconsistent_bounds_at_vars"] = np.flatnonzero(bad)[:5].tolist()
    return hints


def validate_solution(lp: SparseLP, x: np.ndarray) -> dict:
    """Per-family maximum normalized residuals of a candidate point.

    Equality rows contribute ``|a'x - b|``, inequality rows ``max(0, a'x - b)``,
    each normalized by ``max(1, max_j |a_j|)`` of the row. Variable bounds are
    reported under the ``bounds`` family. For macro LPs the minimum density
    entry is reported as ``min_density`` (informational, not a residual).
    """
    x = np.asarray(x, dtype=float)
    if x.size != lp.n_vars:
        raise ValidationError(f"solution has {x.size} entries, LP has {lp.n_vars} variables")
    csr = sp.coo_matrix((lp.values, (lp.rows, lp.cols)),
                        shape=(lp.n_rows, lp.n_vars)).tocsr()
    resid = csr @ x - lp.rhs
    le = lp.senses == SENSE_LE
    resid[le] = np.maximum(resid[le], 0.0)
    resid = np.abs(resid)

    row_norm = np.ones(lp.n_rows)
    np.maximum.at(row_norm, lp.rows, np.abs(lp.values))
    resid /= row_norm

    table = {}
    for idx, name in enumerate(lp.family_names):
        mask = lp.row_family == idx
        if mask.any():
            table[name] = float(resid[mask].max())
    bound_violation = np.maximum(lp.lower - x, 0.0) + np.maximum(x - lp.upper, 0.0)
    scale = np.maximum(1.0, np.maximum(np.abs(lp.lower), np.abs(lp.upper)))
    scale[~np.isfinite(scale)] = 1.0
    table["bounds"] = float((bound_violation / scale).max()) if x.size else 0.0

    if lp.blocks is not None and lp.meta.get("kind") == "macro":
        table["min_density"] = float(x[: lp.blocks.n_rho].min())
    return table


def solve_arrays(
    lp: SparseLP,
    time_limit_s: Optional[float] = None,
    backend: str = "highs",
) -> Tuple[Optional[np.ndarray], SolveReport]:
    """Solve the LP, returning the raw solution vector and a report.

    The report's residual table is filled only for optimal outcomes; an
    optimal status with any normalized residual above ``RESIDUAL_TOL`` raises
    :class:`ValidationError` rather than silently passing the point through.
    """
    if backend not in BACKENDS:
        raise SolverError(f"unknown backend '{backend}', expected one of {BACKENDS}")
    A_ub, b_ub, A_eq, b_eq = _split_constraints(lp)
    options = {}
    if time_limit_s is not None:
        options["time_limit"] = float(time_limit_s)
    start = time.perf_counter()
    res = linprog(
        lp.objective,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=np.column_stack([lp.lower, lp.upper]),
        method=backend,
        options=options,
    )
    wall = time.perf_counter() - start

    status_map = {0: "optimal", 2: "infeasible", 3: "unbounded"}
    if res.status in status_map:
        status = status_map[res.status]
    elif "time" in (res.message or "").lower():
        status = "time_limit"
    else:
        status = "failed"

    report = SolveReport(
        status=status,
        objective=float(res.fun) if res.status == 0 else None,
        backend=backend,
        wall_time_s=wall,
        iterations=int(getattr(res, "nit", 0) or 0),
        message=str(res.message or ""),
    )
    if status != "optimal":
        report.diagnostics = _feasibility_hints(lp)
        return None, report

    x = np.asarray(res.x, dtype=float)
    report.residuals = validate_solution(lp, x)
    report.max_residual = max(
        v for k, v in report.residuals.items() if k != "min_density"
    )
    if report.max_residual > RESIDUAL_TOL:
        raise ValidationError(
            f"backend reported optimal but residuals reach {report.max_residual:.3e} "
            f"(tolerance {RESIDUAL_TOL:.0e}); worst families: "
            + ", ".join(
                f"{k}={v:.2e}" for k, v in sorted(
                    report.residuals.items(), key=lambda kv: -kv[1]
                )[:3]
            )
        )
    return x, report


def solve(
    lp: SparseLP,
    time_limit_s: Optional[float] = None,
    backend: str = "highs",
) -> Tuple[Optional[MacroSolution], SolveReport]:
    """Solve a macro LP and extract the trajectory blocks.

    Returns ``(None, report)`` when the backend does not reach optimality; the
    report then carries feasibility hints naming the suspect input family.
    """
    x, report = solve_arrays(lp, time_limit_s=time_limit_s, backend=backend)
    if x is None:
        return None, report
    return extract_solution(lp, x), report
