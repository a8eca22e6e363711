"""Broadcast signal reconstruction and device-side setpoint inversion.

The scheduler's output is turned into a single state-indexed drift command
``v[k, t]`` (one value per cell and step) that is broadcast unchanged to every
device. A device never reports its state upward: it looks up the command for
its current cell, subtracts the intrinsic drift at that cell's center, and
divides by its own conversion factor to obtain a power setpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grids import Grid
from .macro_lp import MacroSolution
from .operators import build_averaging
from .populations import PopulationSpec, drift_bounds, intrinsic_drift

__all__ = [
    "BroadcastSignal",
    "recover_signal",
    "local_setpoint",
    "write_signal_csv",
    "read_signal_csv",
]


@dataclass(frozen=True)
class BroadcastSignal:
    """Per-cell drift commands over the horizon, clipped to reachable drifts.

    ``values[k, t]`` is the commanded net drift (1/h) for cell k at step t;
    ``clip_applied`` records where the raw reconstruction left the reachable
    range (this only happens in cells with vanishing density).
    """

    values: np.ndarray  # (K, T)
    sigma: float
    clip_applied: np.ndarray  # (K, T) bool

    @property
    def n_cells(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_steps(self) -> int:
        return int(self.values.shape[1])


def recover_signal(
    solution: MacroSolution,
    spec: PopulationSpec,
    grid: Grid,
    sigma: float = 1e-8,
) -> BroadcastSignal:
    """Reconstruct the drift command from the optimal density and flux.

    The cell-centered flux is divided by the density regularized with
    ``sigma`` (keeps unoccupied cells finite), then clipped into the reachable
    drift range at the cell center. For occupied cells the flux polytope makes
    the raw ratio land inside the range on its own, so clipping is inert there.
    """
    if sigma <= 0:
        raise ParameterError(f"regularization sigma must be positive, got {sigma}")
    A = build_averaging(grid).tocsr()
    centered_flux = solution.phi_adv @ A.T  # (T, K)
    rho = solution.rho[:-1]  # density at step start, (T, K)
    raw = centered_flux / (rho + sigma)
    v_lo, v_hi = drift_bounds(spec, grid.cell_centers())
    clipped = np.clip(raw, v_lo[None, :], v_hi[None, :])
    clip_applied = clipped != raw
    return BroadcastSignal(
        values=np.ascontiguousarray(clipped.T),
        sigma=float(sigma),
        clip_applied=np.ascontiguousarray(clip_applied.T),
    )


def local_setpoint(
    signal: BroadcastSignal,
    spec: PopulationSpec,
    gamma_i,
    x_i,
    t: int,
    grid: Grid,
):
    """Invert the broadcast command into a per-device power setpoint (kW).

    ``u = (v[k(x), t] - f(center_k)) / gamma_i`` clamped to the device power
    limits. The intrinsic drift is evaluated at the cell center, not at the
    device state, so the command stays a pure broadcast of K values.
    Accepts scalars or arrays for ``gamma_i`` and ``x_i``.
    """
    if not 0 <= t < signal.n_steps:
        raise ParameterError(f"step {t} outside horizon of {signal.n_steps} steps")
    k = grid.cell_of(x_i)
    centers = grid.cell_centers()
    v_cmd = signal.values[k, t]
    f_k = intrinsic_drift(spec, centers[k])
    u = (v_cmd - f_k) / np.asarray(gamma_i, dtype=float)
    u = np.clip(u, spec.u_min, spec.u_max)
    return float(u) if np.ndim(u) == 0 else u


def write_signal_csv(signal: BroadcastSignal, path) -> None:
    """Write the K x T command array, one row per cell."""
    np.savetxt(path, signal.values, delimiter=",", fmt="%.17g")


def read_signal_csv(path, sigma: float = 1e-8) -> BroadcastSignal:
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    return BroadcastSignal(
        values=values,
        sigma=sigma,
        clip_applied=np.zeros_like(values, dtype=bool),
    )
