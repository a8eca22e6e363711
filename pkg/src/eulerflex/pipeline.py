"""End-to-end orchestration: schedule, execute, benchmark, sweep.

These functions are the programmatic counterparts of the CLI subcommands and
are what the test suite drives. Each stage is pure with respect to its inputs
(given identical seeds it produces identical results), so sweep cells can run
independently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .broadcast import BroadcastSignal, recover_signal
from .config_io import Problem
from .density import DensityVector
from .device_benchmark import assemble_device_lp, cost_gap, extract_device_solution
from .errors import SolverError
from .macro_lp import (
    MacroSolution,
    PowerModel,
    SparseLP,
    assemble_macro_lp,
    assembly_report,
)
from .micro_sim import AgentEnsemble, SimMetrics, build_ensemble, simulate, state_histogram
from .solver_gate import SolveReport, solve, solve_arrays

__all__ = [
    "ScheduleResult",
    "BenchmarkResult",
    "run_schedule",
    "run_execution",
    "run_benchmark",
    "sweep_epsilon",
    "sweep_population",
    "sweep_resolution",
]


@dataclass
class ScheduleResult:
    problem: Problem
    lp: SparseLP
    solution: MacroSolution
    report: SolveReport
    signal: BroadcastSignal
    assembly: dict
    assemble_time_s: float


@dataclass
class BenchmarkResult:
    n_devices: int
    macro_objective: float
    device_objective: float
    gap: float
    macro_report: SolveReport
    device_report: SolveReport
    schedule: ScheduleResult
    ensemble: AgentEnsemble


def run_schedule(
    problem: Problem,
    backend: str = "highs",
    time_limit_s: Optional[float] = None,
    power_model: PowerModel = PowerModel.ENERGY_BALANCED,
    rho0: Optional[DensityVector] = None,
) -> ScheduleResult:
    """Assemble and solve the population LP, then reconstruct the broadcast signal."""
    rho0 = rho0 if rho0 is not None else problem.rho0
    start = time.perf_counter()
    lp = assemble_macro_lp(
        problem.spec,
        problem.scenario,
        problem.grid,
        rho0,
        eps_cyc=problem.epsilon,
        power_model=power_model,
    )
    assemble_time = time.perf_counter() - start
    solution, report = solve(lp, time_limit_s=time_limit_s, backend=backend)
    if solution is None:
        raise SolverError(
            f"scheduling LP ended with status '{report.status}': {report.message}; "
            f"diagnostics {report.diagnostics}"
        )
    signal = recover_signal(solution, problem.spec, problem.grid, sigma=problem.sigma)
    return ScheduleResult(
        problem=problem,
        lp=lp,
        solution=solution,
        report=report,
        signal=signal,
        assembly=assembly_report(lp, problem.grid, problem.spec, problem.scenario),
        assemble_time_s=assemble_time,
    )


def run_execution(
    schedule: ScheduleResult,
    n_devices: Optional[int] = None,
    seed: Optional[int] = None,
    ensemble: Optional[AgentEnsemble] = None,
    target_density: Optional[DensityVector] = None,
) -> SimMetrics:
    """Monte-Carlo execution of a schedule by a sampled fleet.

    The cyclic-deviation target defaults to the density the schedule was
    solved against. The fleet's aggregate-power scale follows the population
    the schedule was built for; the number of simulated devices may differ
    (that is the point of the population sweeps), in which case their power is
    rescaled to the scheduled fleet size for the grid-exchange metrics.
    """
    problem = schedule.problem
    if ensemble is None:
        n = n_devices if n_devices is not None else problem.spec.n_devices
        ensemble = build_ensemble(
            problem.spec,
            n,
            problem.init_mean,
            problem.init_std,
            seed if seed is not None else problem.seed,
            capacity_std_kwh=problem.capacity_std_kwh,
        )
    target = target_density if target_density is not None else DensityVector(
        schedule.solution.rho[0], problem.grid.dx
    )
    metrics = simulate(
        ensemble,
        schedule.signal,
        problem.spec,
        problem.scenario,
        problem.grid,
        seed=seed,
        target_density=target,
        scheduled_p_agg=schedule.solution.p_agg * ensemble.n_devices / problem.spec.n_devices,
    )
    if ensemble.n_devices != problem.spec.n_devices:
        # per-device behavior at a different fleet size; rescale to scheduled fleet
        scale = problem.spec.n_devices / ensemble.n_devices
        metrics.p_agg = metrics.p_agg * scale
        metrics.pg = problem.scenario.net_load + metrics.p_agg
        metrics.cost = float(
            problem.grid.dt_hours
            * np.sum(
                problem.scenario.price_buy * np.maximum(metrics.pg, 0.0)
                - problem.scenario.price_sell * np.maximum(-metrics.pg, 0.0)
            )
        )
    return metrics


def run_benchmark(
    problem: Problem,
    seed: Optional[int] = None,
    backend: str = "highs",
    time_limit_s: Optional[float] = None,
    power_model: PowerModel = PowerModel.ENERGY_BALANCED,
) -> BenchmarkResult:
    """Population schedule vs. the device-level benchmark on one sampled fleet.

    Both sides see the same fleet: the scheduler receives its anonymized
    histogram as the initial density, the benchmark receives the individual
    states. Problem size should be kept small (the benchmark scales with N).
    """
    seed = seed if seed is not None else problem.seed
    ensemble = build_ensemble(
        problem.spec,
        problem.spec.n_devices,
        problem.init_mean,
        problem.init_std,
        seed,
        capacity_std_kwh=problem.capacity_std_kwh,
    )
    rho0 = state_histogram(ensemble.x, problem.grid)
    sched = run_schedule(
        problem, backend=backend, time_limit_s=time_limit_s,
        power_model=power_model, rho0=rho0,
    )
    device_lp = assemble_device_lp(
        ensemble.x, ensemble.gamma, problem.spec, problem.scenario, problem.grid
    )
    x, device_report = solve_arrays(device_lp, time_limit_s=time_limit_s, backend=backend)
    if x is None:
        raise SolverError(
            f"device benchmark LP ended with status '{device_report.status}': "
            f"{device_report.message}"
        )
    device = extract_device_solution(device_lp, x)
    return BenchmarkResult(
        n_devices=problem.spec.n_devices,
        macro_objective=sched.solution.objective,
        device_objective=device.objective,
        gap=cost_gap(sched.solution.objective, device.objective),
        macro_report=sched.report,
        device_report=device_report,
        schedule=sched,
        ensemble=ensemble,
    )


def _median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=float)))


def _execution_cells(schedule: ScheduleResult, n_devices: int, seeds: Sequence[int]):
    metrics = [run_execution(schedule, n_devices=n_devices, seed=s) for s in seeds]
    return {
        "cost_median": _median([m.cost for m in metrics]),
        "soc_violation_kwh_median": _median(
            [m.soc_violation_kwh_per_device for m in metrics]
        ),
        "cyclic_deviation_kwh_median": _median(
            [m.cyclic_deviation_kwh_per_device for m in metrics]
        ),
        "w1_terminal_median": _median([m.w1_terminal for m in metrics]),
    }


def sweep_epsilon(
    build, eps_values: Sequence[float], seeds: Sequence[int],
    backend: str = "highs",
) -> list:
    """One row per cyclicity budget: LP cost and realized execution metrics.

    ``build`` maps an epsilon override to a :class:`Problem`.
    """
    rows = []
    for eps in eps_values:
        row = {"epsilon": float(eps)}
        try:
            t0 = time.perf_counter()
            sched = run_schedule(build(eps), backend=backend)
            row["lp_cost"] = sched.solution.objective
            row["lp_wall_time_s"] = time.perf_counter() - t0
            t0 = time.perf_counter()
            row.update(_execution_cells(sched, sched.problem.spec.n_devices, seeds))
            row["sim_wall_time_s"] = time.perf_counter() - t0
            row["status"] = "ok"
        except Exception as err:  # keep sweeping, record the failure
            row["status"] = f"error: {err}"
        rows.append(row)
    return rows


def sweep_population(
    build, n_values: Sequence[int], seeds: Sequence[int],
    backend: str = "highs",
) -> list:
    """One row per population size: LP timing plus execution fidelity.

    The LP is re-assembled per population (its dimensions stay fixed; only the
    capacity scale and scenario scaling change), demonstrating size-independent
    scheduling cost.
    """
    rows = []
    for n in n_values:
        row = {"n_devices": int(n)}
        try:
            problem = build(int(n))
            t0 = time.perf_counter()
            sched = run_schedule(problem, backend=backend)
            row["lp_cost"] = sched.solution.objective
            row["lp_wall_time_s"] = time.perf_counter() - t0
            row["lp_solve_time_s"] = sched.report.wall_time_s
            t0 = time.perf_counter()
            row.update(_execution_cells(sched, int(n), seeds))
            row["sim_wall_time_s"] = time.perf_counter() - t0
            row["status"] = "ok"
        except Exception as err:
            row["status"] = f"error: {err}"
        rows.append(row)
    return rows


def sweep_resolution(
    build, resolution_values: Sequence[tuple], seeds: Sequence[int],
    backend: str = "highs",
    benchmark_seed: int = 0,
) -> list:
    """One row per (dt_minutes, cells) pair: benchmark gap and execution metrics.

    ``build`` maps ``(dt_minutes, cells)`` to a :class:`Problem`; the same
    fleet seed is used across resolutions so gaps are comparable.
    """
    rows = []
    for dt_min, cells in resolution_values:
        row = {"dt_minutes": float(dt_min), "cells": int(cells)}
        try:
            problem = build(float(dt_min), int(cells))
            t0 = time.perf_counter()
            bench = run_benchmark(problem, seed=benchmark_seed, backend=backend)
            row["lp_cost"] = bench.macro_objective
            row["benchmark_cost"] = bench.device_objective
            row["gap"] = bench.gap
            row["lp_wall_time_s"] = bench.macro_report.wall_time_s
            row["benchmark_wall_time_s"] = bench.device_report.wall_time_s
            row["total_wall_time_s"] = time.perf_counter() - t0
            if seeds:
                row.update(_execution_cells(bench.schedule, problem.spec.n_devices, seeds))
            row["status"] = "ok"
        except Exception as err:
            row["status"] = f"error: {err}"
        rows.append(row)
    return rows
