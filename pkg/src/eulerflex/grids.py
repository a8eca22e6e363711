"""Uniform discretization of the normalized state space and the horizon."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = ["Grid"]


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid over [0, 1] and uniform time steps over the horizon.

    ``n_cells`` control volumes of width ``dx = 1 / n_cells``; density values
    live at cell centers, fluxes at the ``n_cells + 1`` interfaces. ``mu`` is
    the dimensionless diffusion number ``diffusion * dt / dx**2`` used by the
    implicit diffusion operator.
    """

    n_cells: int
    dt_hours: float
    n_steps: int
    diffusion: float = 0.0

    def __post_init__(self) -> None:
        if self.n_cells < 2:
            raise ParameterError(f"need at least 2 cells, got {self.n_cells}")
        if not (math.isfinite(self.dt_hours) and self.dt_hours > 0):
            raise ParameterError(f"dt must be positive, got {self.dt_hours}")
        if self.n_steps < 1:
            raise ParameterError(f"need at least 1 step, got {self.n_steps}")
        if not (math.isfinite(self.diffusion) and self.diffusion >= 0):
            raise ParameterError(f"diffusion must be nonnegative, got {self.diffusion}")

    @classmethod
    def for_horizon(
        cls, n_cells: int, dt_hours: float, horizon_hours: float, diffusion: float = 0.0
    ) -> "Grid":
        steps = horizon_hours / dt_hours
        if abs(steps - round(steps)) > 1e-9:
            raise ParameterError(
                f"horizon {horizon_hours} h is not an integer number of {dt_hours} h steps"
            )
        return cls(n_cells=n_cells, dt_hours=dt_hours, n_steps=int(round(steps)),
                   diffusion=diffusion)

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def mu(self) -> float:
        return self.diffusion * self.dt_hours / self.dx**2

    @property
    def horizon_hours(self) -> float:
        return self.n_steps * self.dt_hours

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def cell_edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.dx

    def cell_of(self, x):
        """0-based cell index of state ``x`` via the ceiling rule.

        ``x = 0`` maps to the first cell; every x in [0, 1] maps to exactly one
        cell. Values marginally outside [0, 1] are clamped to the end cells.
        """
        arr = np.asarray(x, dtype=float)
        idx = np.clip(np.ceil(arr * self.n_cells).astype(int), 1, self.n_cells) - 1
        return int(idx) if idx.ndim == 0 else idx
