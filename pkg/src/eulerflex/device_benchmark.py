"""Centralized device-level benchmark LP.

Optimizes every device's power trajectory explicitly under the same tariffs,
feeder load, and exchange limits as the population scheduler, with hard
per-device cyclicity ``x_i(T) = x_i(0)``. Deterministic forward-Euler device
dynamics at the scheduling step (no diffusion): the intrinsic drift is affine
in the state, so the model stays exactly linear. Problem size grows linearly
with the fleet, which is precisely what makes this a benchmark rather than a
scalable method.

Per-device cyclicity is stricter than distribution-level cyclicity, so cost
gaps against the population scheduler can take either sign; compare
magnitudes, not signs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError
from .grids import Grid
from .macro_lp import SENSE_EQ, SENSE_LE, SparseLP
from .populations import GridScenario, PopulationSpec

__all__ = ["DeviceBlocks", "DeviceSolution", "assemble_device_lp", "extract_device_solution",
           "cost_gap"]

VARIABLE_GUARD = 10_000_000

DEVICE_FAMILIES = (
    "device_dynamics",
    "device_cyclicity",
    "coupling",
    "pg_max",
    "pg_min",
)


@dataclass(frozen=True)
class DeviceBlocks:
    """Index map: x[i, t] for t=0..T, u[i, t] for t=0..T-1, then import/export."""

    n_devices: int
    n_steps: int

    @property
    def n_x(self) -> int:
        return self.n_devices * (self.n_steps + 1)

    @property
    def n_u(self) -> int:
        return self.n_devices * self.n_steps

    @property
    def n_vars(self) -> int:
        return self.n_x + self.n_u + 2 * self.n_steps

    def x(self, i, t):
        return t * self.n_devices + i

    def u(self, i, t):
        return self.n_x + t * self.n_devices + i

    def pg_import(self, t):
        return self.n_x + self.n_u + t

    def pg_export(self, t):
        return self.n_x + self.n_u + self.n_steps + t


@dataclass
class DeviceSolution:
    x: np.ndarray  # (T+1, N)
    u: np.ndarray  # (T, N)
    pg_import: np.ndarray
    pg_export: np.ndarray
    objective: float

    @property
    def pg(self) -> np.ndarray:
        return self.pg_import - self.pg_export


def assemble_device_lp(
    x0: np.ndarray,
    gamma: np.ndarray,
    spec: PopulationSpec,
    scenario: GridScenario,
    grid: Grid,
) -> SparseLP:
    """Assemble the device-level LP for initial states ``x0`` and factors ``gamma``.

    Dynamics per device and step:
    ``x[i, t+1] = x[i, t] + (f(x[i, t]) + gamma_i * u[i, t]) * dt`` with the
    affine intrinsic drift substituted exactly. State bounds [0, 1], device
    power box, shared grid coupling, and the same import/export objective as
    the population scheduler.
    """
    x0 = np.asarray(x0, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if x0.shape != gamma.shape or x0.ndim != 1:
        raise AssemblyError("x0 and gamma must be 1-D arrays of equal length")
    if np.any((x0 < 0) | (x0 > 1)):
        raise AssemblyError("initial device states must lie in [0, 1]")
    N = x0.size
    T = grid.n_steps
    dt = grid.dt_hours
    if scenario.n_steps != T or abs(scenario.dt_hours - dt) > 1e-12:
        raise AssemblyError("scenario horizon does not match the grid")

    blocks = DeviceBlocks(N, T)
    if blocks.n_vars > VARIABLE_GUARD:
        warnings.warn(
            f"device benchmark with {blocks.n_vars} variables exceeds the "
            f"{VARIABLE_GUARD} tractability guard",
            RuntimeWarning,
        )

    if spec.intrinsic is None:
        alpha, x_amb = 0.0, 0.0
    else:
        alpha, x_amb = spec.intrinsic.alpha, spec.intrinsic.x_amb

    fam = {name: i for i, name in enumerate(DEVICE_FAMILIES)}
    ts = np.arange(T)
    ii = np.arange(N)

    rows_parts, cols_parts, vals_parts = [], [], []
    senses_parts, rhs_parts, fam_parts = [], [], []
    n_rows = 0

    def add(name, count, sense, rhs, rows, cols, vals):
        nonlocal n_rows
        rows_parts.append(np.asarray(rows, dtype=np.int64) + n_rows)
        cols_parts.append(np.asarray(cols, dtype=np.int64))
        vals_parts.append(np.asarray(vals, dtype=float))
        senses_parts.append(np.full(count, sense, dtype=np.int8))
        rhs_parts.append(np.asarray(rhs, dtype=float))
        fam_parts.append(np.full(count, fam[name], dtype=np.int16))
        n_rows += count

    # dynamics: x[i,t+1] - (1 - alpha dt) x[i,t] - gamma_i dt u[i,t] = alpha x_amb dt
    r = (ts[:, None] * N + ii[None, :]).ravel()
    x_next = (blocks.x(ii[None, :], ts[:, None] + 1)).ravel()
    x_cur = (blocks.x(ii[None, :], ts[:, None])).ravel()
    u_cur = (blocks.u(ii[None, :], ts[:, None])).ravel()
    gamma_t = np.tile(gamma, T)
    add(
        "device_dynamics",
        N * T,
        SENSE_EQ,
        np.full(N * T, alpha * x_amb * dt),
        np.concatenate([r, r, r]),
        np.concatenate([x_next, x_cur, u_cur]),
        np.concatenate([np.ones(N * T), np.full(N * T, -(1.0 - alpha * dt)),
                        -gamma_t * dt]),
    )

    # hard per-device cyclicity: x[i, T] = x0_i (x[i, 0] is fixed by bounds)
    add("device_cyclicity", N, SENSE_EQ, x0.copy(), ii, blocks.x(ii, T), np.ones(N))

    # coupling: pg_import - pg_export - sum_i u[i, t] = net_t
    r_c = np.concatenate([ts, ts, np.repeat(ts, N)])
    c_c = np.concatenate([
        blocks.pg_import(ts),
        blocks.pg_export(ts),
        (blocks.u(ii[None, :], ts[:, None])).ravel(),
    ])
    v_c = np.concatenate([np.ones(T), -np.ones(T), -np.ones(N * T)])
    add("coupling", T, SENSE_EQ, scenario.net_load.copy(), r_c, c_c, v_c)

    add("pg_max", T, SENSE_LE, np.full(T, scenario.pg_max),
        np.concatenate([ts, ts]),
        np.concatenate([blocks.pg_import(ts), blocks.pg_export(ts)]),
        np.concatenate([np.ones(T), -np.ones(T)]))
    add("pg_min", T, SENSE_LE, np.full(T, -scenario.pg_min),
        np.concatenate([ts, ts]),
        np.concatenate([blocks.pg_import(ts), blocks.pg_export(ts)]),
        np.concatenate([-np.ones(T), np.ones(T)]))

    c = np.zeros(blocks.n_vars)
    c[blocks.pg_import(ts)] = dt * scenario.price_buy
    c[blocks.pg_export(ts)] = -dt * scenario.price_sell

    lower = np.zeros(blocks.n_vars)
    upper = np.full(blocks.n_vars, np.inf)
    upper[: blocks.n_x] = 1.0  # state box
    lower[blocks.x(ii, 0)] = x0
    upper[blocks.x(ii, 0)] = x0
    lower[blocks.n_x : blocks.n_x + blocks.n_u] = spec.u_min
    upper[blocks.n_x : blocks.n_x + blocks.n_u] = spec.u_max

    lp = SparseLP(
        objective=c,
        rows=np.concatenate(rows_parts),
        cols=np.concatenate(cols_parts),
        values=np.concatenate(vals_parts),
        senses=np.concatenate(senses_parts),
        rhs=np.concatenate(rhs_parts),
        lower=lower,
        upper=upper,
        row_family=np.concatenate(fam_parts),
        family_names=DEVICE_FAMILIES,
        blocks=None,
        meta={
            "kind": "device",
            "n_devices": N,
            "n_steps": T,
            "dt_hours": dt,
            "net_load": scenario.net_load,
            "pg_min": scenario.pg_min,
            "pg_max": scenario.pg_max,
            "u_box_contains_zero": bool(spec.u_min <= 0.0 <= spec.u_max),
            "device_blocks": blocks,
        },
    )
    lp.check_indices()
    return lp


def extract_device_solution(lp: SparseLP, x: np.ndarray) -> DeviceSolution:
    blocks = lp.meta.get("device_blocks")
    if blocks is None:
        raise AssemblyError("not a device benchmark LP")
    N, T = blocks.n_devices, blocks.n_steps
    return DeviceSolution(
        x=x[: blocks.n_x].reshape(T + 1, N).copy(),
        u=x[blocks.n_x : blocks.n_x + blocks.n_u].reshape(T, N).copy(),
        pg_import=x[blocks.pg_import(0) : blocks.pg_import(0) + T].copy(),
        pg_export=x[blocks.pg_export(0) : blocks.pg_export(0) + T].copy(),
        objective=float(lp.objective @ x),
    )


def cost_gap(macro_objective: float, device_objective: float) -> float:
    """Relative gap ``(macro - device) / |device|`` of the two schedules."""
    if device_objective == 0:
        raise AssemblyError("device benchmark objective is zero; relative gap undefined")
    return (macro_objective - device_objective) / abs(device_objective)
