"""Assembly of the flux-lifted population-scheduling linear program.

Decision variables, indexed through :class:`VariableBlocks`:

* ``rho[k, t]`` for ``t = 0..T``: cell-centered state density (1/state).
* ``phi[l, t]`` for ``t = 0..T-1``: advective interface flux (1/h), the lifted
  variable that replaces the bilinear product of drift and density.
* ``pg_import[t], pg_export[t] >= 0``: split of the grid exchange, so that
  asymmetric purchase/sale tariffs yield a linear objective.
* ``z[k] >= 0``: auxiliary vector linearizing the terminal-vs-initial CDF gap.

Constraint families, in row order:

* dynamics: ``(I - L) rho_{t+1} = rho_t - M phi_t`` (explicit advection,
  implicit diffusion).
* boundary: zero advective flux through both domain edges.
* polytope: ``Vmin rho_t <= A phi_t <= Vmax rho_t`` with the reachable drift
  range evaluated at cell centers; this is the lifted image of the per-device
  power limits.
* coupling: grid exchange equals net feeder load plus the population's
  aggregate power.
* pg limits: exchange within the feeder interface range.
* cyclicity: ``-z <= S (rho_T - rho_0) <= z`` and ``dx * sum(z) <= eps``, a
  transport-distance ball of radius ``eps`` (state units) around the initial
  distribution; ``eps = 0`` collapses to an exact terminal match.
* normalization: ``dx * sum_k rho[k, t] = 1`` for every t (redundant with the
  dynamics given a normalized start, retained to guard solver drift).

Aggregate power models
----------------------

``ADVECTIVE`` meters only the advective transport,
``P_agg = E_total * dx * 1' (A phi_t - f o rho_t)``. Under reflecting
boundaries this leaves the diffusive boundary flux unmetered: the implicit
diffusion step moves the population mean by ``D * dt * (rho_first - rho_last)``
per step at zero metered power, so a cost minimizer can park density against a
state boundary and export the reflected diffusion indefinitely. ``ENERGY_BALANCED``
adds the metering term ``E_total * D * (rho_first - rho_last)`` evaluated at
t+1, which restores exact fleet-energy accounting (for zero intrinsic drift,
the horizon sum of aggregate power equals the fleet-mean change exactly). The
two models coincide whenever the density stays off the boundary cells.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density import DensityVector
from .errors import AssemblyError
from .grids import Grid
from .operators import (
    build_averaging,
    build_cdf,
    build_diffusion,
    build_divergence,
    verify_cfl,
)
from .populations import GridScenario, PopulationSpec, drift_bounds, intrinsic_drift

__all__ = [
    "PowerModel",
    "VariableBlocks",
    "SparseLP",
    "MacroSolution",
    "assemble_macro_lp",
    "extract_solution",
    "assembly_report",
]

SENSE_EQ = 0
SENSE_LE = 1

FAMILIES = (
    "dynamics",
    "boundary",
    "polytope_min",
    "polytope_max",
    "coupling",
    "pg_max",
    "pg_min",
    "cyclicity_hi",
    "cyclicity_lo",
    "cyclicity_budget",
    "normalization",
)


class PowerModel(str, enum.Enum):
    ADVECTIVE = "advective"
    ENERGY_BALANCED = "energy_balanced"


@dataclass(frozen=True)
class VariableBlocks:
    """Index map of the LP variable vector for a (K, T) discretization."""

    n_cells: int
    n_steps: int

    @property
    def n_rho(self) -> int:
        return self.n_cells * (self.n_steps + 1)

    @property
    def n_phi(self) -> int:
        return (self.n_cells + 1) * self.n_steps

    @property
    def n_vars(self) -> int:
        return self.n_rho + self.n_phi + 2 * self.n_steps + self.n_cells

    def rho(self, k, t):
        return t * self.n_cells + k

    def phi(self, l, t):
        return self.n_rho + t * (self.n_cells + 1) + l

    def pg_import(self, t):
        return self.n_rho + self.n_phi + t

    def pg_export(self, t):
        return self.n_rho + self.n_phi + self.n_steps + t

    def z(self, k):
        return self.n_rho + self.n_phi + 2 * self.n_steps + k

    def describe(self) -> dict:
        return {
            "rho": [0, self.n_rho],
            "phi_adv": [self.n_rho, self.n_rho + self.n_phi],
            "pg_import": [self.pg_import(0), self.pg_import(0) + self.n_steps],
            "pg_export": [self.pg_export(0), self.pg_export(0) + self.n_steps],
            "z": [self.z(0), self.z(0) + self.n_cells],
            "n_vars": self.n_vars,
        }


@dataclass
class SparseLP:
    """Standard-form sparse LP: min c'x s.t. triplet rows with =/<= senses and box bounds."""

    objective: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    senses: np.ndarray  # SENSE_EQ or SENSE_LE per row
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_family: np.ndarray  # index into family_names per row
    family_names: tuple
    blocks: Optional[VariableBlocks] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return int(self.objective.size)

    @property
    def n_rows(self) -> int:
        return int(self.rhs.size)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def check_indices(self) -> None:
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= self.n_rows:
                raise AssemblyError("constraint row index out of range")
            if self.cols.min() < 0 or self.cols.max() >= self.n_vars:
                raise AssemblyError("constraint references an unknown variable")


@dataclass
class MacroSolution:
    """Optimal macroscopic trajectory extracted from an LP solution vector."""

    rho: np.ndarray  # (T+1, K)
    phi_adv: np.ndarray  # (T, K+1)
    pg_import: np.ndarray  # (T,)
    pg_export: np.ndarray  # (T,)
    z: np.ndarray  # (K,)
    objective: float
    p_agg: np.ndarray  # (T,) advective-metered aggregate power (what devices realize)
    power_model: str

    @property
    def pg(self) -> np.ndarray:
        return self.pg_import - self.pg_export


class _TripletBuffer:
    """Accumulates triplets and per-row metadata family by family."""

    def __init__(self):
        self.rows = []
        self.cols = []
        self.vals = []
        self.rhs = []
        self.senses = []
        self.families = []
        self.n_rows = 0

    def add_family(self, name_idx, n_new_rows, sense, rhs, rows, cols, vals):
        self.rows.append(np.asarray(rows, dtype=np.int64) + self.n_rows)
        self.cols.append(np.asarray(cols, dtype=np.int64))
        self.vals.append(np.asarray(vals, dtype=float))
        self.rhs.append(np.asarray(rhs, dtype=float))
        self.senses.append(np.full(n_new_rows, sense, dtype=np.int8))
        self.families.append(np.full(n_new_rows, name_idx, dtype=np.int16))
        self.n_rows += n_new_rows


def _cross(row_base: np.ndarray, row_stride: int, col_base: np.ndarray, col_stride: int,
           t_range: np.ndarray):
    """Replicate a triplet pattern across time steps with affine index offsets."""
    rows = (row_stride * t_range[:, None] + row_base[None, :]).ravel()
    cols = (col_stride * t_range[:, None] + col_base[None, :]).ravel()
    return rows, cols


def assemble_macro_lp(
    spec: PopulationSpec,
    scenario: GridScenario,
    grid: Grid,
    rho0: DensityVector,
    eps_cyc: float = 0.0,
    power_model: PowerModel = PowerModel.ENERGY_BALANCED,
    include_normalization: bool = True,
) -> SparseLP:
    """Assemble the scheduling LP for one population over the grid horizon.

    Parameters
    ----------
    rho0 : DensityVector
        Initial state density; fixed by equality (the initial histogram is
        data, not a decision).
    eps_cyc : float
        Transport-distance budget (state units) for the terminal distribution.
    power_model : PowerModel
        Aggregate-power metering model; see the module docstring.
    include_normalization : bool
        Keep the redundant per-step mass constraints (default). Mass is also
        conserved implicitly by the dynamics with zero boundary flux.
    """
    K, T = grid.n_cells, grid.n_steps
    dx, dt = grid.dx, grid.dt_hours
    power_model = PowerModel(power_model)

    if rho0.n_cells != K:
        raise AssemblyError(f"initial density has {rho0.n_cells} cells, grid has {K}")
    if abs(rho0.dx - dx) > 1e-12:
        raise AssemblyError("initial density cell width does not match the grid")
    if scenario.n_steps != T:
        raise AssemblyError(f"scenario has {scenario.n_steps} steps, grid has {T}")
    if abs(scenario.dt_hours - dt) > 1e-12:
        raise AssemblyError("scenario step does not match the grid step")
    if abs(grid.diffusion - spec.diffusion) > 1e-15:
        raise AssemblyError("grid diffusion number was built for a different population")
    if eps_cyc < 0:
        raise AssemblyError(f"cyclicity budget must be nonnegative, got {eps_cyc}")

    blocks = VariableBlocks(K, T)
    n = blocks.n_vars
    centers = grid.cell_centers()
    f_c = np.asarray(intrinsic_drift(spec, centers), dtype=float)
    v_lo, v_hi = drift_bounds(spec, centers)
    net = scenario.net_load
    e_total = spec.e_total

    M = build_divergence(grid)
    L = build_diffusion(grid)
    A = build_averaging(grid)
    S = build_cdf(grid)

    # I - L triplets
    il_rows = np.concatenate([np.arange(K), L.rows])
    il_cols = np.concatenate([np.arange(K), L.cols])
    il_vals = np.concatenate([np.ones(K), -L.values])

    ts = np.arange(T)
    buf = _TripletBuffer()
    fam = {name: i for i, name in enumerate(FAMILIES)}

    rho0_off = blocks.rho(0, 0)  # = 0
    phi_off = blocks.phi(0, 0)

    # dynamics: (I - L) rho_{t+1} - rho_t + M phi_t = 0
    r1, c1 = _cross(il_rows, K, il_cols + K, K, ts)  # rho_{t+1} columns
    v1 = np.tile(il_vals, T)
    r2, c2 = _cross(np.arange(K), K, np.arange(K), K, ts)  # -rho_t
    v2 = np.full(K * T, -1.0)
    r3, c3 = _cross(M.rows, K, phi_off + M.cols, K + 1, ts)  # +M phi_t
    v3 = np.tile(M.values, T)
    buf.add_family(fam["dynamics"], K * T, SENSE_EQ, np.zeros(K * T),
                   np.concatenate([r1, r2, r3]), np.concatenate([c1, c2, c3]),
                   np.concatenate([v1, v2, v3]))

    # boundary: phi[0, t] = 0 and phi[K, t] = 0
    rows_b = np.concatenate([2 * ts, 2 * ts + 1])
    cols_b = np.concatenate([phi_off + ts * (K + 1), phi_off + ts * (K + 1) + K])
    buf.add_family(fam["boundary"], 2 * T, SENSE_EQ, np.zeros(2 * T),
                   rows_b, cols_b, np.ones(2 * T))

    # polytope: Vmin rho_t - A phi_t <= 0 and A phi_t - Vmax rho_t <= 0
    ra1, ca1 = _cross(A.rows, K, phi_off + A.cols, K + 1, ts)
    rd1, cd1 = _cross(np.arange(K), K, np.arange(K), K, ts)
    buf.add_family(fam["polytope_min"], K * T, SENSE_LE, np.zeros(K * T),
                   np.concatenate([rd1, ra1]), np.concatenate([cd1, ca1]),
                   np.concatenate([np.tile(v_lo, T), np.tile(-A.values, T)]))
    buf.add_family(fam["polytope_max"], K * T, SENSE_LE, np.zeros(K * T),
                   np.concatenate([rd1, ra1]), np.concatenate([cd1, ca1]),
                   np.concatenate([np.tile(-v_hi, T), np.tile(A.values, T)]))

    # coupling: pg_import - pg_export - P_agg(rho, phi) = net_t
    flux_weight = np.zeros(K + 1)
    np.add.at(flux_weight, A.cols, A.values)  # column sums of A: 0.5 at edges, 1 inside
    rows_c = [np.concatenate([ts, ts])]
    cols_c = [np.concatenate([blocks.pg_import(ts), blocks.pg_export(ts)])]
    vals_c = [np.concatenate([np.ones(T), -np.ones(T)])]
    rphi, cphi = _cross(np.zeros(K + 1, dtype=np.int64), 1, phi_off + np.arange(K + 1),
                        K + 1, ts)
    rows_c.append(rphi)
    cols_c.append(cphi)
    vals_c.append(np.tile(-e_total * dx * flux_weight, T))
    if np.any(f_c != 0.0):
        rrho, crho = _cross(np.zeros(K, dtype=np.int64), 1, np.arange(K), K, ts)
        rows_c.append(rrho)
        cols_c.append(crho)
        vals_c.append(np.tile(e_total * dx * f_c, T))
    if power_model is PowerModel.ENERGY_BALANCED and spec.diffusion > 0:
        # meter the diffusive boundary drift of the fleet mean, evaluated at t+1
        rows_c.append(np.concatenate([ts, ts]))
        cols_c.append(np.concatenate([blocks.rho(0, ts + 1), blocks.rho(K - 1, ts + 1)]))
        coef = e_total * spec.diffusion
        vals_c.append(np.concatenate([np.full(T, -coef), np.full(T, coef)]))
    buf.add_family(fam["coupling"], T, SENSE_EQ, net.copy(),
                   np.concatenate(rows_c), np.concatenate(cols_c), np.concatenate(vals_c))

    # pg limits on the exchange pg_import - pg_export
    buf.add_family(fam["pg_max"], T, SENSE_LE, np.full(T, scenario.pg_max),
                   np.concatenate([ts, ts]),
                   np.concatenate([blocks.pg_import(ts), blocks.pg_export(ts)]),
                   np.concatenate([np.ones(T), -np.ones(T)]))
    buf.add_family(fam["pg_min"], T, SENSE_LE, np.full(T, -scenario.pg_min),
                   np.concatenate([ts, ts]),
                   np.concatenate([blocks.pg_import(ts), blocks.pg_export(ts)]),
                   np.concatenate([-np.ones(T), np.ones(T)]))

    # cyclicity: S rho_T - z <= S rho0, -S rho_T - z <= -S rho0, dx 1'z <= eps
    s_rhs = S.tocsr() @ rho0.values
    ks = np.arange(K)
    buf.add_family(fam["cyclicity_hi"], K, SENSE_LE, s_rhs.copy(),
                   np.concatenate([S.rows, ks]),
                   np.concatenate([blocks.rho(S.cols, T), blocks.z(ks)]),
                   np.concatenate([S.values, -np.ones(K)]))
    buf.add_family(fam["cyclicity_lo"], K, SENSE_LE, -s_rhs,
                   np.concatenate([S.rows, ks]),
                   np.concatenate([blocks.rho(S.cols, T), blocks.z(ks)]),
                   np.concatenate([-S.values, -np.ones(K)]))
    buf.add_family(fam["cyclicity_budget"], 1, SENSE_LE, np.array([eps_cyc]),
                   np.zeros(K, dtype=np.int64), blocks.z(ks), np.full(K, dx))

    if include_normalization:
        ts_all = np.arange(T + 1)
        rn, cn = _cross(np.zeros(K, dtype=np.int64), 1, np.arange(K), K, ts_all)
        buf.add_family(fam["normalization"], T + 1, SENSE_EQ, np.ones(T + 1),
                       rn, cn, np.full(K * (T + 1), dx))

    # objective and bounds
    c = np.zeros(n)
    c[blocks.pg_import(ts)] = dt * scenario.price_buy
    c[blocks.pg_export(ts)] = -dt * scenario.price_sell

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    lower[phi_off:phi_off + blocks.n_phi] = -np.inf
    lower[rho0_off:rho0_off + K] = rho0.values
    upper[rho0_off:rho0_off + K] = rho0.values

    lp = SparseLP(
        objective=c,
        rows=np.concatenate(buf.rows),
        cols=np.concatenate(buf.cols),
        values=np.concatenate(buf.vals),
        senses=np.concatenate(buf.senses),
        rhs=np.concatenate(buf.rhs),
        lower=lower,
        upper=upper,
        row_family=np.concatenate(buf.families),
        family_names=FAMILIES,
        blocks=blocks,
        meta={
            "kind": "macro",
            "n_cells": K,
            "n_steps": T,
            "dx": dx,
            "dt_hours": dt,
            "e_total": e_total,
            "diffusion": spec.diffusion,
            "power_model": power_model.value,
            "eps_cyc": float(eps_cyc),
            "flux_weight": flux_weight,
            "intrinsic_at_centers": f_c,
            "v_lo": np.asarray(v_lo, dtype=float),
            "v_hi": np.asarray(v_hi, dtype=float),
            "net_load": net,
            "pg_min": scenario.pg_min,
            "pg_max": scenario.pg_max,
            "u_box_contains_zero": bool(spec.u_min <= 0.0 <= spec.u_max),
        },
    )
    lp.check_indices()
    return lp


def advective_aggregate_power(lp: SparseLP, rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Aggregate power realized by devices following the advective transport (kW)."""
    w = lp.meta["flux_weight"]
    f_c = lp.meta["intrinsic_at_centers"]
    e_total = lp.meta["e_total"]
    dx = lp.meta["dx"]
    T = lp.meta["n_steps"]
    return e_total * dx * (phi @ w - rho[:T] @ f_c)


def extract_solution(lp: SparseLP, x: np.ndarray) -> MacroSolution:
    """Slice a raw solution vector into the macroscopic trajectory blocks."""
    b = lp.blocks
    if b is None or lp.meta.get("kind") != "macro":
        raise AssemblyError("solution extraction requires a macro LP with variable blocks")
    K, T = b.n_cells, b.n_steps
    rho = x[: b.n_rho].reshape(T + 1, K).copy()
    phi = x[b.n_rho : b.n_rho + b.n_phi].reshape(T, K + 1).copy()
    imp = x[b.pg_import(0) : b.pg_import(0) + T].copy()
    exp = x[b.pg_export(0) : b.pg_export(0) + T].copy()
    z = x[b.z(0) : b.z(0) + K].copy()
    return MacroSolution(
        rho=rho,
        phi_adv=phi,
        pg_import=imp,
        pg_export=exp,
        z=z,
        objective=float(lp.objective @ x),
        p_agg=advective_aggregate_power(lp, rho, phi),
        power_model=lp.meta["power_model"],
    )


def assembly_report(lp: SparseLP, grid: Grid, spec: PopulationSpec,
                    scenario: GridScenario) -> dict:
    """JSON-ready assembly summary: dimensions, sparsity, CFL, feasibility hints."""
    cfl = verify_cfl(grid, spec)
    net = scenario.net_load
    return {
        "n_vars": lp.n_vars,
        "n_rows": lp.n_rows,
        "nnz": lp.nnz,
        "blocks": lp.blocks.describe() if lp.blocks else None,
        "cfl_number": cfl.cfl_number,
        "cfl_ok": cfl.ok,
        "power_model": lp.meta.get("power_model"),
        "eps_cyc": lp.meta.get("eps_cyc"),
        # hints for an always-feasible idle operating point
        "idle_power_admissible": bool(spec.u_min <= 0.0 <= spec.u_max),
        "base_net_within_pg": bool(
            np.all(net >= scenario.pg_min - 1e-9) and np.all(net <= scenario.pg_max + 1e-9)
        ),
    }
