"""Run configuration files: TOML schema, validation, and problem building.

A run configuration is a TOML document with sections ``[population]``,
``[tcl]`` (thermostatic loads only), ``[grid]``, ``[initial]``,
``[cyclicity]``, ``[execution]``, and ``[scenario]``. Keys carry explicit
units in their names (``dt_minutes``, ``price_buy_usd_per_kwh``) because unit
slips are the dominant failure mode in this pipeline. Scenario arrays may be
inline TOML lists or references to single-column CSV files
(``base_load_csv = "base.csv"``, resolved relative to the config file).

Scenario arrays describe a reference population size; loads, generation, and
exchange limits are scaled linearly to the configured device count so per-
device operating conditions stay comparable across population sweeps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .density import DensityVector, truncated_normal_density
from .errors import ConfigError
from .grids import Grid
from .populations import (
    GridScenario,
    PopulationSpec,
    ResourceKind,
    TclRawParams,
    battery_population,
    population_from_tcl,
)

__all__ = ["RunConfig", "Problem", "load_config", "build_problem", "PROFILES"]

PROFILES = {
    "desk": {"cells": 100, "dt_minutes": 5.0},
    "paper": {"cells": 200, "dt_minutes": 1.0},
}


@dataclass
class RunConfig:
    """Validated contents of one configuration file."""

    path: Path
    sha256: str
    kind: ResourceKind
    count: int
    u_min_kw: float
    u_max_kw: float
    diffusion: float
    e_cap_kwh: Optional[float]
    e_cap_std_kwh: float
    tcl: Optional[TclRawParams]
    cells: int
    dt_minutes: float
    horizon_hours: float
    init_mean: float
    init_std: float
    epsilon: float
    sigma: float
    seed: int
    reference_population: int
    resolution_minutes: float
    price_buy: np.ndarray
    price_sell: np.ndarray
    base_load: np.ndarray
    renewable: np.ndarray
    pg_min_kw: float
    pg_max_kw: float


@dataclass
class Problem:
    """Fully resolved inputs for one pipeline run."""

    spec: PopulationSpec
    scenario: GridScenario
    grid: Grid
    rho0: DensityVector
    epsilon: float
    sigma: float
    seed: int
    capacity_std_kwh: float
    init_mean: float
    init_std: float
    resolved: dict = field(default_factory=dict)


def _section(doc: dict, name: str) -> dict:
    if name not in doc:
        raise ConfigError(f"missing section [{name}]")
    return doc[name]


def _get(table: dict, section: str, key: str, kind=float, default=_section):
    if key not in table:
        if default is not _section:
            return default
        raise ConfigError(f"missing key '{key}' in section [{section}]")
    value = table[key]
    try:
        return kind(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"key '{key}' in [{section}]: {err}") from err


def _get_array(table: dict, section: str, key_base: str, config_dir: Path) -> np.ndarray:
    """Array from an inline list ``<key_base>`` or a CSV reference ``<stem>_csv``."""
    csv_key = key_base.rsplit("_usd_per_kwh", 1)[0].rsplit("_kw", 1)[0] + "_csv"
    if key_base in table and csv_key in table:
        raise ConfigError(f"give either '{key_base}' or '{csv_key}' in [{section}], not both")
    if key_base in table:
        try:
            return np.asarray([float(v) for v in table[key_base]], dtype=float)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"key '{key_base}' in [{section}] must be a list of numbers: {err}")
    if csv_key in table:
        csv_path = config_dir / str(table[csv_key])
        if not csv_path.exists():
            raise ConfigError(f"key '{csv_key}' in [{section}] references missing file {csv_path}")
        return np.loadtxt(csv_path, delimiter=",", ndmin=1)
    raise ConfigError(f"missing key '{key_base}' (or '{csv_key}') in section [{section}]")


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path} is not valid TOML: {err}") from err

    pop = _section(doc, "population")
    kind_str = _get(pop, "population", "kind", str)
    try:
        kind = ResourceKind(kind_str)
    except ValueError:
        raise ConfigError(f"population kind '{kind_str}' is not one of ev, bess, tcl")

    tcl = None
    e_cap = None
    if kind is ResourceKind.TCL:
        tbl = _section(doc, "tcl")
        tcl = TclRawParams(
            theta_min=_get(tbl, "tcl", "theta_min_c"),
            theta_max=_get(tbl, "tcl", "theta_max_c"),
            theta_amb=_get(tbl, "tcl", "theta_amb_c"),
            alpha=_get(tbl, "tcl", "alpha_per_hour"),
            eta_cop=_get(tbl, "tcl", "eta_cop", float, None),
            c_th=_get(tbl, "tcl", "c_th_kwh_per_c", float, None),
            e_cap_effective=_get(tbl, "tcl", "e_cap_effective_kwh", float, None),
        )
    else:
        e_cap = _get(pop, "population", "e_cap_kwh")

    grid_tbl = _section(doc, "grid")
    init_tbl = _section(doc, "initial")
    cyc_tbl = doc.get("cyclicity", {})
    exe_tbl = doc.get("execution", {})
    scn = _section(doc, "scenario")

    cfg = RunConfig(
        path=path,
        sha256=hashlib.sha256(raw).hexdigest(),
        kind=kind,
        count=_get(pop, "population", "count", int),
        u_min_kw=_get(pop, "population", "u_min_kw"),
        u_max_kw=_get(pop, "population", "u_max_kw"),
        diffusion=_get(pop, "population", "diffusion_state2_per_hour"),
        e_cap_kwh=e_cap,
        e_cap_std_kwh=_get(pop, "population", "e_cap_std_kwh", float, 0.0),
        tcl=tcl,
        cells=_get(grid_tbl, "grid", "cells", int),
        dt_minutes=_get(grid_tbl, "grid", "dt_minutes"),
        horizon_hours=_get(grid_tbl, "grid", "horizon_hours"),
        init_mean=_get(init_tbl, "initial", "mean"),
        init_std=_get(init_tbl, "initial", "std"),
        epsilon=_get(cyc_tbl, "cyclicity", "epsilon", float, 0.0),
        sigma=_get(exe_tbl, "execution", "sigma", float, 1e-8),
        seed=_get(exe_tbl, "execution", "seed", int, 0),
        reference_population=_get(scn, "scenario", "reference_population", int),
        resolution_minutes=_get(scn, "scenario", "resolution_minutes"),
        price_buy=_get_array(scn, "scenario", "price_buy_usd_per_kwh", path.parent),
        price_sell=_get_array(scn, "scenario", "price_sell_usd_per_kwh", path.parent),
        base_load=_get_array(scn, "scenario", "base_load_kw", path.parent),
        renewable=_get_array(scn, "scenario", "renewable_kw", path.parent),
        pg_min_kw=_get(scn, "scenario", "pg_min_kw"),
        pg_max_kw=_get(scn, "scenario", "pg_max_kw"),
    )
    return cfg


def build_problem(
    cfg: RunConfig,
    profile: Optional[str] = None,
    count: Optional[int] = None,
    cells: Optional[int] = None,
    dt_minutes: Optional[float] = None,
    epsilon: Optional[float] = None,
) -> Problem:
    """Resolve a configuration (plus overrides) into model objects.

    Override precedence: explicit arguments beat the profile, which beats the
    configuration file.
    """
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile '{profile}', expected one of {sorted(PROFILES)}")
        prof = PROFILES[profile]
        cells = cells if cells is not None else prof["cells"]
        dt_minutes = dt_minutes if dt_minutes is not None else prof["dt_minutes"]

    n = count if count is not None else cfg.count
    k = cells if cells is not None else cfg.cells
    dt_min = dt_minutes if dt_minutes is not None else cfg.dt_minutes
    eps = epsilon if epsilon is not None else cfg.epsilon
    dt_hours = dt_min / 60.0

    if cfg.kind is ResourceKind.TCL:
        spec = population_from_tcl(cfg.tcl, n, cfg.u_min_kw, cfg.u_max_kw, cfg.diffusion)
    else:
        spec = battery_population(cfg.kind, n, cfg.e_cap_kwh, cfg.u_min_kw, cfg.u_max_kw,
                                  cfg.diffusion)

    try:
        native = GridScenario(
            price_buy=cfg.price_buy,
            price_sell=cfg.price_sell,
            base_load=cfg.base_load,
            renewable=cfg.renewable,
            pg_min=cfg.pg_min_kw,
            pg_max=cfg.pg_max_kw,
            horizon_hours=cfg.horizon_hours,
            dt_hours=cfg.resolution_minutes / 60.0,
        )
        scenario = native.scaled(n / cfg.reference_population).zero_order_hold(dt_hours)
        grid = Grid.for_horizon(k, dt_hours, cfg.horizon_hours, diffusion=cfg.diffusion)
    except ValueError as err:
        raise ConfigError(str(err)) from err

    rho0 = truncated_normal_density(grid, cfg.init_mean, cfg.init_std)
    return Problem(
        spec=spec,
        scenario=scenario,
        grid=grid,
        rho0=rho0,
        epsilon=eps,
        sigma=cfg.sigma,
        seed=cfg.seed,
        capacity_std_kwh=cfg.e_cap_std_kwh,
        init_mean=cfg.init_mean,
        init_std=cfg.init_std,
        resolved={
            "config": str(cfg.path),
            "config_sha256": cfg.sha256,
            "kind": cfg.kind.value,
            "count": n,
            "cells": k,
            "dt_minutes": dt_min,
            "horizon_hours": cfg.horizon_hours,
            "epsilon": eps,
            "sigma": cfg.sigma,
            "seed": cfg.seed,
            "profile": profile,
            "capacity_std_kwh": cfg.e_cap_std_kwh,
            "init_mean": cfg.init_mean,
            "init_std": cfg.init_std,
        },
    )
