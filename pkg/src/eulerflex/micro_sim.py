"""Monte-Carlo execution of the broadcast schedule by individual devices.

Each device carries a normalized state driven by an Euler-Maruyama step of
``dx = (f(center) + gamma_i * u_i) dt + sqrt(2 D dt) dW`` with reflection at
the state limits. States never leave [0, 1]; instead, the pre-reflection
overshoot is metered as bound-violation energy, matching how a physical
device would saturate while the model charges the excursion to the schedule.

Aggregation back to the scheduler happens only through anonymized histograms
(the data-mixing interface): per-device states are binned on the shared grid
before anything leaves this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import truncnorm

from .broadcast import BroadcastSignal
from .density import DensityVector
from .errors import AssemblyError, ParameterError
from .grids import Grid
from .operators import build_cdf
from .populations import GridScenario, PopulationSpec, intrinsic_drift

__all__ = [
    "AgentEnsemble",
    "SimMetrics",
    "sample_initial_states",
    "sample_capacities",
    "build_ensemble",
    "state_histogram",
    "euler_maruyama_step",
    "simulate",
    "wasserstein1",
]


@dataclass
class AgentEnsemble:
    """Microscopic state of N devices plus their per-device parameters."""

    x: np.ndarray  # normalized states, in [0, 1]
    gamma: np.ndarray  # per-device conversion factor (1/kWh)
    e_cap: np.ndarray  # per-device capacity (kWh), 1/gamma
    seed: int

    def __post_init__(self) -> None:
        if not (self.x.shape == self.gamma.shape == self.e_cap.shape):
            raise ParameterError("ensemble arrays must have identical shapes")
        if np.any((self.x < 0) | (self.x > 1)):
            raise ParameterError("ensemble states must lie in [0, 1]")

    @property
    def n_devices(self) -> int:
        return int(self.x.size)


@dataclass
class SimMetrics:
    """Realized population-level outcomes of one Monte-Carlo run."""

    p_agg: np.ndarray  # (T,) realized aggregate device power, kW
    pg: np.ndarray  # (T,) realized grid exchange, kW
    cost: float  # $
    soc_violation_kwh_per_device: float
    cyclic_deviation_kwh_per_device: float
    terminal_histogram: DensityVector
    w1_terminal: float  # state units, vs the scheduling target
    seed: int
    n_devices: int
    tracking_error_kw: float = 0.0  # mean |realized - scheduled| aggregate power
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "n_devices": self.n_devices,
            "seed": self.seed,
            "cost": self.cost,
            "soc_violation_kwh_per_device": self.soc_violation_kwh_per_device,
            "cyclic_deviation_kwh_per_device": self.cyclic_deviation_kwh_per_device,
            "w1_terminal": self.w1_terminal,
            "tracking_error_kw": self.tracking_error_kw,
            **self.extras,
        }


def _rng(seed: int) -> np.random.Generator:
    # counter-based bit generator: reproducible and order-independent draws
    return np.random.Generator(np.random.Philox(key=seed))


def sample_initial_states(
    n_devices: int, mean: float, std: float, seed: int
) -> np.ndarray:
    """Draw i.i.d. initial states from a normal truncated to [0, 1]."""
    if std <= 0:
        raise ParameterError(f"std must be positive, got {std}")
    a, b = (0.0 - mean) / std, (1.0 - mean) / std
    return truncnorm.rvs(a, b, loc=mean, scale=std, size=n_devices, random_state=_rng(seed))


def sample_capacities(
    spec: PopulationSpec, n_devices: int, std_kwh: float, seed: int
) -> np.ndarray:
    """Per-device capacities around the representative value, truncated at 3 sigma.

    ``std_kwh = 0`` yields a homogeneous fleet. Truncation keeps capacities
    positive and the conversion factors finite.
    """
    mean = spec.e_cap
    if std_kwh == 0:
        return np.full(n_devices, mean)
    if std_kwh < 0:
        raise ParameterError(f"capacity std must be nonnegative, got {std_kwh}")
    if mean - 3 * std_kwh <= 0:
        raise ParameterError("capacity dispersion too wide, 3-sigma range crosses zero")
    draws = truncnorm.rvs(-3.0, 3.0, loc=mean, scale=std_kwh, size=n_devices,
                          random_state=_rng(seed))
    return draws


def build_ensemble(
    spec: PopulationSpec,
    n_devices: int,
    init_mean: float,
    init_std: float,
    seed: int,
    capacity_std_kwh: float = 0.0,
) -> AgentEnsemble:
    """Sample a fleet: initial states plus per-device capacity dispersion."""
    x = sample_initial_states(n_devices, init_mean, init_std, seed)
    e_cap = sample_capacities(spec, n_devices, capacity_std_kwh, seed + 1)
    return AgentEnsemble(x=x, gamma=1.0 / e_cap, e_cap=e_cap, seed=seed)


def state_histogram(x: np.ndarray, grid: Grid) -> DensityVector:
    """Anonymized density histogram of device states on the shared grid.

    ``rho_k = count_k / (N dx)``; mass is exactly 1 by construction.
    """
    if np.any((x < 0) | (x > 1)):
        raise ParameterError("states outside [0, 1] cannot be binned")
    cells = grid.cell_of(x)
    counts = np.bincount(cells, minlength=grid.n_cells).astype(float)
    return DensityVector(values=counts / (x.size * grid.dx), dx=grid.dx)


def _reflect(x: np.ndarray) -> np.ndarray:
    # fold back into [0, 1]; overshoot beyond one domain width folds repeatedly
    for _ in range(16):
        out = (x < 0.0) | (x > 1.0)
        if not out.any():
            return x
        x = np.where(x < 0.0, -x, x)
        x = np.where(x > 1.0, 2.0 - x, x)
    return np.clip(x, 0.0, 1.0)


def euler_maruyama_step(
    x: np.ndarray,
    signal: BroadcastSignal,
    spec: PopulationSpec,
    gamma: np.ndarray,
    e_cap: np.ndarray,
    t: int,
    grid: Grid,
    rng: np.random.Generator,
):
    """Advance all devices one step; returns (states, setpoints, violation energies).

    Per-device setpoints come from the broadcast inversion clamped to the
    device power box. Bound violations are metered on the pre-reflection
    overshoot: ``(max(0, x' - 1) + max(0, -x')) * e_cap`` in kWh.
    """
    k = grid.cell_of(x)
    centers = grid.cell_centers()
    f_k = np.asarray(intrinsic_drift(spec, centers[k]), dtype=float)
    u = np.clip((signal.values[k, t] - f_k) / gamma, spec.u_min, spec.u_max)
    drift = f_k + gamma * u
    noise = 0.0
    if spec.diffusion > 0:
        noise = np.sqrt(2.0 * spec.diffusion * grid.dt_hours) * rng.standard_normal(x.size)
    raw = x + drift * grid.dt_hours + noise
    violation = (np.maximum(raw - 1.0, 0.0) + np.maximum(-raw, 0.0)) * e_cap
    return _reflect(raw), u, violation


def wasserstein1(a: DensityVector, b: DensityVector, grid: Grid) -> float:
    """Transport distance between two densities on the grid (state units).

    Computed as ``dx * sum_k |F_a(k) - F_b(k)|`` with the discrete CDFs
    ``F = S @ rho``; for 1-D distributions this equals the minimal
    mass-transport cost. Symmetric, nonnegative, zero iff the inputs match.
    """
    if a.n_cells != grid.n_cells or b.n_cells != grid.n_cells:
        raise ParameterError("densities and grid disagree on the cell count")
    S = build_cdf(grid).tocsr()
    return float(grid.dx * np.abs(S @ a.values - S @ b.values).sum())


def simulate(
    ensemble: AgentEnsemble,
    signal: BroadcastSignal,
    spec: PopulationSpec,
    scenario: GridScenario,
    grid: Grid,
    seed: Optional[int] = None,
    target_density: Optional[DensityVector] = None,
    scheduled_p_agg: Optional[np.ndarray] = None,
) -> SimMetrics:
    """Run the fleet through the horizon and collect realized metrics.

    Parameters
    ----------
    target_density : DensityVector, optional
        Distribution the schedule promised to restore; defaults to the
        ensemble's own initial histogram. The cyclic deviation converts the
        terminal transport distance into kWh per device via the mean capacity.
    scheduled_p_agg : ndarray, optional
        Scheduler's planned aggregate power, used only for the tracking-error
        diagnostic.
    seed : int, optional
        Noise seed for this run; defaults to the ensemble seed. The outcome is
        fully determined by (ensemble, signal, seed).
    """
    T = grid.n_steps
    if signal.n_steps != T or signal.n_cells != grid.n_cells:
        raise AssemblyError(
            f"signal shape {signal.values.shape} does not cover the "
            f"{grid.n_cells}x{T} horizon"
        )
    if scenario.n_steps != T:
        raise AssemblyError("scenario horizon does not match the grid")
    noise_seed = ensemble.seed if seed is None else seed
    rng = _rng(noise_seed)

    x = ensemble.x.copy()
    if target_density is None:
        target_density = state_histogram(x, grid)

    p_agg = np.empty(T)
    violation = np.zeros(ensemble.n_devices)
    for t in range(T):
        x, u, v_step = euler_maruyama_step(
            x, signal, spec, ensemble.gamma, ensemble.e_cap, t, grid, rng
        )
        p_agg[t] = u.sum()
        violation += v_step

    pg = scenario.net_load + p_agg
    cost = float(
        grid.dt_hours
        * np.sum(
            scenario.price_buy * np.maximum(pg, 0.0)
            - scenario.price_sell * np.maximum(-pg, 0.0)
        )
    )
    terminal = state_histogram(x, grid)
    w1 = wasserstein1(terminal, target_density, grid)
    tracking = 0.0
    if scheduled_p_agg is not None:
        tracking = float(np.mean(np.abs(p_agg - np.asarray(scheduled_p_agg))))
    return SimMetrics(
        p_agg=p_agg,
        pg=pg,
        cost=cost,
        soc_violation_kwh_per_device=float(violation.mean()),
        cyclic_deviation_kwh_per_device=float(w1 * ensemble.e_cap.mean()),
        terminal_histogram=terminal,
        w1_terminal=w1,
        seed=noise_seed,
        n_devices=ensemble.n_devices,
        tracking_error_kw=tracking,
    )
