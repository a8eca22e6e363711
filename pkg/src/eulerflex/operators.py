"""Discrete finite-volume operators on the state grid, in sparse triplet form.

Four operators are built from the grid alone:

* divergence ``M`` (K x K+1): maps interface fluxes to cell-centered density
  changes, entries ``(dt/dx) * (-1 at l=k, +1 at l=k+1)``.
* diffusion ``L`` (K x K): tridiagonal, ``-2*mu`` on interior diagonals and
  ``mu`` off-diagonal; boundary rows carry ``-mu`` so that no diffusive flux
  crosses the domain edges.
* averaging ``A`` (K x K+1): maps interface fluxes to cell centers with
  weights 0.5 on the two adjacent interfaces.
* cdf ``S`` (K x K): lower-triangular with entries ``dx``, so ``S @ rho`` is
  the discrete CDF and its last entry is 1 for a normalized density.

All builders are deterministic functions of ``(K, dt, dx, mu)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError
from .grids import Grid
from .populations import PopulationSpec, drift_bounds

__all__ = [
    "TripletMatrix",
    "build_divergence",
    "build_diffusion",
    "build_averaging",
    "build_cdf",
    "CflDiagnostic",
    "verify_cfl",
]

_DENSE_LIMIT = 64  # toarray() is a test/debug convenience, not a compute path


@dataclass(frozen=True)
class TripletMatrix:
    """Sparse matrix as parallel (row, col, value) arrays."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        if not (rows.shape == cols.shape == values.shape):
            raise ParameterError("triplet arrays must have identical shapes")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise ParameterError("triplet row index out of range")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise ParameterError("triplet column index out of range")
            flat = rows * self.n_cols + cols
            if np.unique(flat).size != flat.size:
                raise ParameterError("duplicate (row, col) entries after assembly")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def tocsr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols)
        )

    def toarray(self) -> np.ndarray:
        if max(self.n_rows, self.n_cols) > _DENSE_LIMIT:
            raise ParameterError(
                f"dense conversion refused for {self.n_rows}x{self.n_cols} matrix"
            )
        return self.tocsr().toarray()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "value"])
            for r, c, v in zip(self.rows, self.cols, self.values):
                writer.writerow([int(r), int(c), repr(float(v))])

    @classmethod
    def from_csv(cls, path, n_rows: int, n_cols: int) -> "TripletMatrix":
        rows, cols, values = [], [], []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(int(rec["row"]))
                cols.append(int(rec["col"]))
                values.append(float(rec["value"]))
        return cls(n_rows, n_cols, np.array(rows, dtype=np.int64),
                   np.array(cols, dtype=np.int64), np.array(values))


def build_divergence(grid: Grid) -> TripletMatrix:
    """Divergence operator M (K x K+1): net interface outflow per cell."""
    k = np.arange(grid.n_cells)
    scale = grid.dt_hours / grid.dx
    rows = np.concatenate([k, k])
    cols = np.concatenate([k, k + 1])
    values = np.concatenate([np.full(grid.n_cells, -scale), np.full(grid.n_cells, scale)])
    return TripletMatrix(grid.n_cells, grid.n_cells + 1, rows, cols, values)


def build_diffusion(grid: Grid) -> TripletMatrix:
    """Implicit diffusion operator L (K x K) with zero-flux boundary closure."""
    K, mu = grid.n_cells, grid.mu
    if mu == 0.0:
        empty = np.array([], dtype=np.int64)
        return TripletMatrix(K, K, empty, empty, np.array([]))
    diag = np.full(K, -2.0 * mu)
    diag[0] = -mu
    diag[-1] = -mu
    k = np.arange(K)
    inner = np.arange(K - 1)
    rows = np.concatenate([k, inner, inner + 1])
    cols = np.concatenate([k, inner + 1, inner])
    values = np.concatenate([diag, np.full(K - 1, mu), np.full(K - 1, mu)])
    return TripletMatrix(K, K, rows, cols, values)


def build_averaging(grid: Grid) -> TripletMatrix:
    """Averaging operator A (K x K+1): interface fluxes to cell centers."""
    K = grid.n_cells
    k = np.arange(K)
    rows = np.concatenate([k, k])
    cols = np.concatenate([k, k + 1])
    values = np.full(2 * K, 0.5)
    return TripletMatrix(K, K + 1, rows, cols, values)


def build_cdf(grid: Grid) -> TripletMatrix:
    """Summation operator S (K x K): ``S @ rho`` is the discrete CDF.

    Entries carry the cell width dx so the CDF is a genuine probability in
    [0, 1] and its last entry equals 1 for a normalized density.
    """
    K = grid.n_cells
    rows, cols = np.tril_indices(K)
    values = np.full(rows.size, grid.dx)
    return TripletMatrix(K, K, rows.astype(np.int64), cols.astype(np.int64), values)


@dataclass(frozen=True)
class CflDiagnostic:
    """Stability ratio of the explicit advective step: ``max |v| * dt / dx``."""

    cfl_number: float
    ok: bool


def verify_cfl(grid: Grid, spec: PopulationSpec) -> CflDiagnostic:
    """Advective CFL diagnostic over the reachable drift range.

    Warning-level only: values above 1 flag that the explicit advective step
    can outrun a cell per step. Drift bounds are affine in x, so evaluating at
    the cell edges (which include 0 and 1) captures the maximum exactly.
    """
    edges = grid.cell_edges()
    v_lo, v_hi = drift_bounds(spec, edges)
    speed = max(np.abs(v_lo).max(), np.abs(v_hi).max())
    cfl = float(speed * grid.dt_hours / grid.dx)
    return CflDiagnostic(cfl_number=cfl, ok=cfl <= 1.0)
