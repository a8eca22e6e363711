"""Physical models of storage-like device populations.

A population is described by a normalized buffer state x in [0, 1] (state of
charge for batteries, normalized indoor temperature for thermostatic loads),
an intrinsic drift acting on that state, a power-to-state conversion factor,
and a diffusion coefficient capturing short-term per-device randomness.

Units: time in hours, power in kW, energy in kWh, state dimensionless.
All rates are per hour, so ``gamma * u`` is a state rate (1/h).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AssemblyError, ParameterError

__all__ = [
    "ResourceKind",
    "LeakyDrift",
    "PopulationSpec",
    "TclRawParams",
    "GridScenario",
    "battery_population",
    "population_from_tcl",
    "intrinsic_drift",
    "drift_bounds",
]


class ResourceKind(str, enum.Enum):
    EV = "ev"
    BESS = "bess"
    TCL = "tcl"


@dataclass(frozen=True)
class LeakyDrift:
    """First-order relaxation toward the (normalized) ambient state.

    The drift is ``-alpha * (x - x_amb)``. ``x_amb`` may lie outside [0, 1]
    when the ambient temperature is outside the comfort band; only the state
    itself is confined to [0, 1].
    """

    alpha: float  # 1/h
    x_amb: float  # normalized state

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ParameterError(f"leak rate alpha must be positive and finite, got {self.alpha}")
        if not math.isfinite(self.x_amb):
            raise ParameterError("ambient state x_amb must be finite")


@dataclass(frozen=True)
class PopulationSpec:
    """Representative physics of one device population.

    Parameters
    ----------
    kind : ResourceKind
        Device class. Batteries (EV/BESS) must have zero intrinsic drift.
    u_min, u_max : float
        Per-device power limits (kW); negative means injection.
    gamma : float
        Conversion from power to state rate, 1/kWh for batteries.
    diffusion : float
        Diffusion coefficient D (state^2/h), >= 0.
    intrinsic : LeakyDrift or None
        None means zero intrinsic drift.
    n_devices : int
        Population size N.
    """

    kind: ResourceKind
    u_min: float
    u_max: float
    gamma: float
    diffusion: float
    intrinsic: Optional[LeakyDrift]
    n_devices: int

    def __post_init__(self) -> None:
        if not self.u_min < self.u_max:
            raise ParameterError(f"need u_min < u_max, got [{self.u_min}, {self.u_max}]")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ParameterError(f"gamma must be positive and finite, got {self.gamma}")
        if not (math.isfinite(self.diffusion) and self.diffusion >= 0):
            raise ParameterError(f"diffusion must be nonnegative, got {self.diffusion}")
        if self.n_devices < 1:
            raise ParameterError(f"need at least one device, got {self.n_devices}")
        if self.kind in (ResourceKind.EV, ResourceKind.BESS) and self.intrinsic is not None:
            raise ParameterError("battery populations (EV/BESS) must have zero intrinsic drift")

    @property
    def e_total(self) -> float:
        """Total population capacity scale N / gamma (kWh)."""
        return self.n_devices / self.gamma

    @property
    def e_cap(self) -> float:
        """Representative per-device capacity 1 / gamma (kWh)."""
        return 1.0 / self.gamma


@dataclass(frozen=True)
class TclRawParams:
    """Raw thermostatic-load parameters before normalization.

    Either ``e_cap_effective`` (kWh) or the pair ``eta_cop``/``c_th`` must be
    given; the two parameterizations are equivalent through
    ``gamma = eta_cop / (c_th * (theta_max - theta_min)) = 1 / e_cap_effective``.
    """

    theta_min: float  # degC
    theta_max: float  # degC
    theta_amb: float  # degC
    alpha: float  # 1/h
    eta_cop: Optional[float] = None  # dimensionless
    c_th: Optional[float] = None  # kWh/degC
    e_cap_effective: Optional[float] = None  # kWh

    def __post_init__(self) -> None:
        if not self.theta_min < self.theta_max:
            raise ParameterError(
                f"need theta_min < theta_max, got [{self.theta_min}, {self.theta_max}]"
            )
        has_cop = self.eta_cop is not None or self.c_th is not None
        has_cap = self.e_cap_effective is not None
        if has_cop and has_cap:
            raise ParameterError("give either eta_cop/c_th or e_cap_effective, not both")
        if has_cop and (self.eta_cop is None or self.c_th is None):
            raise ParameterError("eta_cop and c_th must be given together")
        if not has_cop and not has_cap:
            raise ParameterError("one of eta_cop/c_th or e_cap_effective is required")

    def conversion_gamma(self) -> float:
        """Power-to-state conversion factor implied by the raw parameters (1/kWh)."""
        if self.e_cap_effective is not None:
            cap = self.e_cap_effective
        else:
            cap = self.c_th * (self.theta_max - self.theta_min) / self.eta_cop
        if not (math.isfinite(cap) and cap > 0):
            raise ParameterError(f"effective thermal capacity must be positive, got {cap}")
        return 1.0 / cap


def battery_population(
    kind: ResourceKind,
    n_devices: int,
    e_cap_kwh: float,
    u_min: float,
    u_max: float,
    diffusion: float,
) -> PopulationSpec:
    """Build an EV or BESS population from a per-device capacity."""
    if kind == ResourceKind.TCL:
        raise ParameterError("use population_from_tcl for thermostatic loads")
    if not (math.isfinite(e_cap_kwh) and e_cap_kwh > 0):
        raise ParameterError(f"per-device capacity must be positive, got {e_cap_kwh}")
    return PopulationSpec(
        kind=kind,
        u_min=u_min,
        u_max=u_max,
        gamma=1.0 / e_cap_kwh,
        diffusion=diffusion,
        intrinsic=None,
        n_devices=n_devices,
    )


def population_from_tcl(
    raw: TclRawParams,
    n_devices: int,
    u_min: float,
    u_max: float,
    diffusion: float,
) -> PopulationSpec:
    """Map raw thermostatic-load parameters onto the normalized population model.

    The indoor temperature is normalized by the comfort band, so the ambient
    state is ``(theta_amb - theta_min) / (theta_max - theta_min)`` and may
    exceed 1 when the ambient lies outside the band.
    """
    band = raw.theta_max - raw.theta_min
    x_amb = (raw.theta_amb - raw.theta_min) / band
    return PopulationSpec(
        kind=ResourceKind.TCL,
        u_min=u_min,
        u_max=u_max,
        gamma=raw.conversion_gamma(),
        diffusion=diffusion,
        intrinsic=LeakyDrift(alpha=raw.alpha, x_amb=x_amb),
        n_devices=n_devices,
    )


def intrinsic_drift(spec: PopulationSpec, x):
    """Intrinsic state rate at ``x`` (1/h), with no control applied.

    Evaluation outside [0, 1] is permitted; cell-center formulas rely on it.
    Accepts scalars or arrays and preserves the input shape.
    """
    arr = np.asarray(x, dtype=float)
    if spec.intrinsic is None:
        out = np.zeros_like(arr)
    else:
        out = -spec.intrinsic.alpha * (arr - spec.intrinsic.x_amb)
    return float(out) if out.ndim == 0 else out


def drift_bounds(spec: PopulationSpec, x):
    """Reachable net drift range ``(v_min(x), v_max(x))`` in 1/h.

    ``v_minmax(x) = intrinsic_drift(x) + gamma * u_minmax``; the lower bound is
    strictly below the upper bound because ``u_min < u_max`` and ``gamma > 0``.
    """
    f = intrinsic_drift(spec, x)
    return f + spec.gamma * spec.u_min, f + spec.gamma * spec.u_max


@dataclass(frozen=True)
class GridScenario:
    """Exogenous feeder conditions over the scheduling horizon.

    Tariffs and load profiles are per-step arrays of equal length
    ``horizon_hours / dt_hours``. The sale tariff must not exceed the purchase
    tariff at any step; the cost objective relies on that ordering to split
    grid exchange into nonnegative import and export parts.
    """

    price_buy: np.ndarray  # $/kWh
    price_sell: np.ndarray  # $/kWh
    base_load: np.ndarray  # kW
    renewable: np.ndarray  # kW
    pg_min: float  # kW
    pg_max: float  # kW
    horizon_hours: float
    dt_hours: float

    def __post_init__(self) -> None:
        for name in ("price_buy", "price_sell", "base_load", "renewable"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.price_buy)
        for name in ("price_sell", "base_load", "renewable"):
            if len(getattr(self, name)) != n:
                raise AssemblyError(f"scenario array '{name}' has length "
                                    f"{len(getattr(self, name))}, expected {n}")
        steps = self.horizon_hours / self.dt_hours
        if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
            raise AssemblyError(
                f"horizon {self.horizon_hours} h is not an integer number of "
                f"{self.dt_hours} h steps"
            )
        if n != round(steps):
            raise AssemblyError(f"scenario arrays have {n} steps, horizon requires {round(steps)}")
        if self.pg_min > self.pg_max:
            raise AssemblyError(f"pg_min {self.pg_min} exceeds pg_max {self.pg_max}")
        if np.any(self.price_sell > self.price_buy + 1e-12):
            t = int(np.argmax(self.price_sell - self.price_buy))
            raise AssemblyError(
                f"sale price exceeds purchase price at step {t} "
                f"({self.price_sell[t]} > {self.price_buy[t]}); the import/export "
                "cost split requires price_sell <= price_buy"
            )

    @property
    def n_steps(self) -> int:
        return len(self.price_buy)

    @property
    def net_load(self) -> np.ndarray:
        """Inelastic net feeder load, base load minus renewable generation (kW)."""
        return self.base_load - self.renewable

    def base_cost(self) -> float:
        """Cost of serving the net load with the flexible population idle ($)."""
        net = self.net_load
        return float(
            self.dt_hours
            * np.sum(self.price_buy * np.maximum(net, 0.0) - self.price_sell * np.maximum(-net, 0.0))
        )

    def zero_order_hold(self, dt_hours: float) -> "GridScenario":
        """Expand the per-step arrays to a finer step by zero-order hold."""
        ratio = self.dt_hours / dt_hours
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise AssemblyError(
                f"target step {dt_hours} h must evenly divide the scenario step {self.dt_hours} h"
            )
        r = int(round(ratio))
        if r == 1:
            return self
        return GridScenario(
            price_buy=np.repeat(self.price_buy, r),
            price_sell=np.repeat(self.price_sell, r),
            base_load=np.repeat(self.base_load, r),
            renewable=np.repeat(self.renewable, r),
            pg_min=self.pg_min,
            pg_max=self.pg_max,
            horizon_hours=self.horizon_hours,
            dt_hours=dt_hours,
        )

    def scaled(self, factor: float) -> "GridScenario":
        """Scale loads, generation, and exchange limits by a population-size factor."""
        if factor <= 0:
            raise AssemblyError(f"scaling factor must be positive, got {factor}")
        return GridScenario(
            price_buy=self.price_buy,
            price_sell=self.price_sell,
            base_load=self.base_load * factor,
            renewable=self.renewable * factor,
            pg_min=self.pg_min * factor,
            pg_max=self.pg_max * factor,
            horizon_hours=self.horizon_hours,
            dt_hours=self.dt_hours,
        )
