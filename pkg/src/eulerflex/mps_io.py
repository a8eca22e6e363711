"""LP interchange in MPS layout, for cross-checking with external solvers.

The writer emits the classic section layout (NAME / ROWS / COLUMNS / RHS /
BOUNDS / ENDATA) with whitespace-separated fields and names of at most eight
characters, readable both as fixed-field and free-format MPS. The reader
parses the same layout back into plain arrays so an independent solver can
reproduce the objective from the file alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssemblyError
from .macro_lp import SENSE_EQ, SENSE_LE, SparseLP

__all__ = ["write_mps", "read_mps", "ParsedMps", "solve_reference"]

_OBJ = "COST"


def _row_name(i: int) -> str:
    return f"R{i}"


def _col_name(j: int) -> str:
    return f"C{j}"


def write_mps(lp: SparseLP, path, name: str = "EULERFLX") -> None:
    """Write the LP as an MPS document.

    Variables follow their internal order; default MPS bounds (0, +inf) are
    omitted, free variables are declared FR, fixed ones FX.
    """
    order = np.lexsort((lp.rows, lp.cols))
    rows = lp.rows[order]
    cols = lp.cols[order]
    vals = lp.values[order]

    lines = [f"NAME          {name[:8]}", "ROWS", f" N  {_OBJ}"]
    sense_char = {SENSE_EQ: "E", SENSE_LE: "L"}
    for i in range(lp.n_rows):
        lines.append(f" {sense_char[int(lp.senses[i])]}  {_row_name(i)}")

    lines.append("COLUMNS")
    obj = lp.objective
    ptr = 0
    nnz = vals.size
    for j in range(lp.n_vars):
        cname = _col_name(j)
        wrote = False
        if obj[j] != 0.0:
            lines.append(f"    {cname}  {_OBJ}  {obj[j]!r}")
            wrote = True
        while ptr < nnz and cols[ptr] == j:
            lines.append(f"    {cname}  {_row_name(int(rows[ptr]))}  {vals[ptr]!r}")
            ptr += 1
            wrote = True
        if not wrote:
            # column must still be declared to exist in the file
            lines.append(f"    {cname}  {_OBJ}  0.0")

    lines.append("RHS")
    for i in range(lp.n_rows):
        if lp.rhs[i] != 0.0:
            lines.append(f"    RHS  {_row_name(i)}  {lp.rhs[i]!r}")

    lines.append("BOUNDS")
    for j in range(lp.n_vars):
        lo, up = lp.lower[j], lp.upper[j]
        cname = _col_name(j)
        if lo == 0.0 and np.isposinf(up):
            continue
        if lo == up:
            lines.append(f" FX BND  {cname}  {lo!r}")
        elif np.isneginf(lo) and np.isposinf(up):
            lines.append(f" FR BND  {cname}")
        else:
            if np.isneginf(lo):
                lines.append(f" MI BND  {cname}")
            elif lo != 0.0:
                lines.append(f" LO BND  {cname}  {lo!r}")
            if not np.isposinf(up):
                lines.append(f" UP BND  {cname}  {up!r}")
    lines.append("ENDATA")

    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


@dataclass
class ParsedMps:
    """Arrays reconstructed from an MPS file, in file declaration order."""

    name: str
    n_rows: int
    n_vars: int
    senses: np.ndarray  # byte chars: E, L, G
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    rhs: np.ndarray
    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_names: list = field(default_factory=list)
    col_names: list = field(default_factory=list)

    def to_linprog_arrays(self):
        """Split into (c, A_ub, b_ub, A_eq, b_eq, bounds) with G rows negated."""
        import scipy.sparse as sp

        senses = self.senses
        sign = np.where(senses == "G", -1.0, 1.0)
        A = sp.coo_matrix(
            (self.values * sign[self.rows], (self.rows, self.cols)),
            shape=(self.n_rows, self.n_vars),
        ).tocsr()
        rhs = self.rhs * sign
        eq = senses == "E"
        ub = ~eq
        return (
            self.objective,
            A[ub] if ub.any() else None,
            rhs[ub] if ub.any() else None,
            A[eq] if eq.any() else None,
            rhs[eq] if eq.any() else None,
            np.column_stack([self.lower, self.upper]),
        )


def read_mps(path) -> ParsedMps:
    """Parse an MPS document written in the layout produced by :func:`write_mps`."""
    name = ""
    section = None
    row_index: dict = {}
    col_index: dict = {}
    senses: list = []
    trip_rows: list = []
    trip_cols: list = []
    trip_vals: list = []
    obj_entries: dict = {}
    rhs_entries: dict = {}
    bound_records: list = []

    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("*"):
                continue
            if not line[0].isspace():
                parts = line.split()
                section = parts[0].upper()
                if section == "NAME" and len(parts) > 1:
                    name = parts[1]
                if section == "ENDATA":
                    break
                continue
            parts = line.split()
            if section == "ROWS":
                kind, rname = parts[0].upper(), parts[1]
                if kind == "N":
                    continue
                if kind not in ("E", "L", "G"):
                    raise AssemblyError(f"unsupported row sense '{kind}' in {path}")
                row_index[rname] = len(senses)
                senses.append(kind)
            elif section == "COLUMNS":
                cname = parts[0]
                if cname not in col_index:
                    col_index[cname] = len(col_index)
                j = col_index[cname]
                for rname, sval in zip(parts[1::2], parts[2::2]):
                    value = float(sval)
                    if rname == _OBJ:
                        if value != 0.0:
                            obj_entries[j] = obj_entries.get(j, 0.0) + value
                    else:
                        trip_rows.append(row_index[rname])
                        trip_cols.append(j)
                        trip_vals.append(value)
            elif section == "RHS":
                for rname, sval in zip(parts[1::2], parts[2::2]):
                    if rname == _OBJ:
                        continue
                    rhs_entries[row_index[rname]] = float(sval)
            elif section == "RANGES":
                raise AssemblyError("RANGES section is not supported")
            elif section == "BOUNDS":
                kind = parts[0].upper()
                cname = parts[2]
                value = float(parts[3]) if len(parts) > 3 else None
                bound_records.append((kind, cname, value))

    n_rows = len(senses)
    n_vars = len(col_index)
    objective = np.zeros(n_vars)
    for j, v in obj_entries.items():
        objective[j] = v
    rhs = np.zeros(n_rows)
    for i, v in rhs_entries.items():
        rhs[i] = v
    lower = np.zeros(n_vars)
    upper = np.full(n_vars, np.inf)
    for kind, cname, value in bound_records:
        j = col_index[cname]
        if kind == "FX":
            lower[j] = upper[j] = value
        elif kind == "FR":
            lower[j], upper[j] = -np.inf, np.inf
        elif kind == "MI":
            lower[j] = -np.inf
        elif kind == "LO":
            lower[j] = value
        elif kind == "UP":
            upper[j] = value
        elif kind == "PL":
            upper[j] = np.inf
        else:
            raise AssemblyError(f"unsupported bound type '{kind}' in {path}")

    row_names = [None] * n_rows
    for rname, i in row_index.items():
        row_names[i] = rname
    col_names = [None] * n_vars
    for cname, j in col_index.items():
        col_names[j] = cname

    return ParsedMps(
        name=name,
        n_rows=n_rows,
        n_vars=n_vars,
        senses=np.array(senses),
        rows=np.array(trip_rows, dtype=np.int64),
        cols=np.array(trip_cols, dtype=np.int64),
        values=np.array(trip_vals),
        rhs=rhs,
        objective=objective,
        lower=lower,
        upper=upper,
        row_names=row_names,
        col_names=col_names,
    )


def solve_reference(parsed: ParsedMps, solver: str = "CLARABEL", **solver_kwargs) -> float:
    """Solve a parsed MPS problem with an external (non-HiGHS) solver.

    Requires ``cvxpy``. Returns the optimal objective value.
    """
    import cvxpy as cp

    c, A_ub, b_ub, A_eq, b_eq, bounds = parsed.to_linprog_arrays()
    x = cp.Variable(parsed.n_vars)
    constraints = []
    if A_ub is not None:
        constraints.append(A_ub @ x <= b_ub)
    if A_eq is not None:
        constraints.append(A_eq @ x == b_eq)
    lo, up = bounds[:, 0], bounds[:, 1]
    finite_lo = np.isfinite(lo)
    finite_up = np.isfinite(up)
    if finite_lo.any():
        constraints.append(x[finite_lo] >= lo[finite_lo])
    if finite_up.any():
        constraints.append(x[finite_up] <= up[finite_up])
    problem = cp.Problem(cp.Minimize(c @ x), constraints)
    problem.solve(solver=solver, **solver_kwargs)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise AssemblyError(f"reference solver returned status {problem.status}")
    return float(problem.value)
