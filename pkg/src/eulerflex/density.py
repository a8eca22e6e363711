"""Cell-centered probability densities on the state grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ParameterError
from .grids import Grid

__all__ = ["DensityVector", "truncated_normal_density", "uniform_density"]

_NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class DensityVector:
    """Nonnegative cell-centered density with unit mass ``dx * sum(values) = 1``."""

    values: np.ndarray
    dx: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise ParameterError("density must be a 1-D vector with at least 2 cells")
        if np.any(values < 0):
            raise ParameterError(f"density has negative entries (min {values.min()})")
        mass = self.dx * values.sum()
        if abs(mass - 1.0) > _NORMALIZATION_TOL:
            raise ParameterError(f"density mass {mass} deviates from 1 beyond tolerance")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values, dx: float, renormalize: bool = False) -> "DensityVector":
        """Wrap raw values; optionally clip tiny negatives and rescale to unit mass.

        Renormalization is for solver output whose entries carry residual-level
        noise; exact inputs should use the plain constructor.
        """
        values = np.asarray(values, dtype=float)
        if renormalize:
            values = np.maximum(values, 0.0)
            mass = dx * values.sum()
            if mass <= 0:
                raise ParameterError("cannot renormalize a zero-mass density")
            values = values / mass
        return cls(values=values, dx=dx)

    @property
    def n_cells(self) -> int:
        return int(self.values.size)

    def masses(self) -> np.ndarray:
        """Per-cell probability masses ``dx * values``."""
        return self.dx * self.values

    def mean(self) -> float:
        centers = (np.arange(self.n_cells) + 0.5) * self.dx
        return float(np.sum(centers * self.masses()))


def truncated_normal_density(grid: Grid, mean: float, std: float) -> DensityVector:
    """Cell masses of a normal distribution truncated to [0, 1], as a density.

    Masses are exact CDF differences of the parent normal, renormalized by the
    mass inside [0, 1]; this matches the law of i.i.d. truncated-normal draws.
    """
    if std <= 0:
        raise ParameterError(f"std must be positive, got {std}")
    edges = grid.cell_edges()
    cdf = norm.cdf((edges - mean) / std)
    inside = cdf[-1] - cdf[0]
    if inside <= 0:
        raise ParameterError("truncated normal has no mass inside [0, 1]")
    masses = np.diff(cdf) / inside
    return DensityVector(values=masses / grid.dx, dx=grid.dx)


def uniform_density(grid: Grid) -> DensityVector:
    return DensityVector(values=np.ones(grid.n_cells), dx=grid.dx)
