"""Command-line front end for the scheduling and execution pipeline.

Subcommands: ``operators``, ``schedule``, ``simulate``, ``benchmark``,
``sweep``, ``report``. Every run writes a manifest (config digest, resolved
settings, seeds, package version, timestamps) sufficient to reproduce its
outputs bit for bit; all artifacts are CSV or JSON and land inside the chosen
output directory only.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 validation
failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import sys
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from .broadcast import read_signal_csv, write_signal_csv
from .config_io import PROFILES, build_problem, load_config
from .density import DensityVector
from .errors import ConfigError, SolverError, ValidationError
from .grids import Grid
from .macro_lp import PowerModel, assemble_macro_lp
from .micro_sim import build_ensemble, simulate
from .mps_io import write_mps
from .operators import (
    build_averaging,
    build_cdf,
    build_diffusion,
    build_divergence,
    verify_cfl,
)
from .pipeline import (
    run_benchmark,
    run_execution,
    run_schedule,
    sweep_epsilon,
    sweep_population,
    sweep_resolution,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4


def _version() -> str:
    try:
        return importlib_metadata.version("eulerflex")
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _manifest(args, problem=None, extra=None) -> dict:
    payload = {
        "command": args.command,
        "version": _version(),
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "argv": sys.argv[1:],
    }
    if problem is not None:
        payload["resolved"] = problem.resolved
    if extra:
        payload.update(extra)
    return payload


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem_from_args(args, **overrides):
    cfg = load_config(args.config)
    return build_problem(
        cfg,
        profile=getattr(args, "profile", None),
        count=overrides.get("count", getattr(args, "n", None)),
        cells=overrides.get("cells", getattr(args, "cells", None)),
        dt_minutes=overrides.get("dt_minutes", getattr(args, "dt_minutes", None)),
        epsilon=overrides.get("epsilon", getattr(args, "eps", None)),
    )


def cmd_operators(args) -> int:
    problem = _problem_from_args(args)
    out = _outdir(args)
    grid = problem.grid
    for name, builder in (
        ("divergence", build_divergence),
        ("diffusion", build_diffusion),
        ("averaging", build_averaging),
        ("cdf", build_cdf),
    ):
        builder(grid).to_csv(out / f"{name}.csv")
    cfl = verify_cfl(grid, problem.spec)
    _write_json(out / "operators_report.json", {
        "n_cells": grid.n_cells,
        "n_steps": grid.n_steps,
        "dx": grid.dx,
        "dt_hours": grid.dt_hours,
        "mu": grid.mu,
        "cfl_number": cfl.cfl_number,
        "cfl_ok": cfl.ok,
    })
    _write_json(out / "manifest.json", _manifest(args, problem))
    print(f"operators written to {out} (cfl={cfl.cfl_number:.3f}, ok={cfl.ok})")
    return EXIT_OK


def cmd_schedule(args) -> int:
    problem = _problem_from_args(args)
    out = _outdir(args)
    result = run_schedule(
        problem,
        backend=args.backend,
        time_limit_s=args.time_limit,
        power_model=PowerModel(args.power_model),
    )
    write_signal_csv(result.signal, out / "signal.csv")
    np.savez_compressed(
        out / "solution.npz",
        rho=result.solution.rho,
        phi_adv=result.solution.phi_adv,
        pg_import=result.solution.pg_import,
        pg_export=result.solution.pg_export,
        z=result.solution.z,
        p_agg=result.solution.p_agg,
        rho0=result.solution.rho[0],
        objective=result.solution.objective,
    )
    if args.export_mps:
        write_mps(result.lp, out / "problem.mps")
    _write_json(out / "solve_report.json", result.report.to_json_dict())
    _write_json(out / "assembly_report.json", result.assembly)
    _write_json(out / "schedule_summary.json", {
        "objective": result.solution.objective,
        "status": result.report.status,
        "power_model": result.solution.power_model,
        "signal_shape": list(result.signal.values.shape),
        "assemble_time_s": result.assemble_time_s,
        "solve_time_s": result.report.wall_time_s,
    })
    _write_json(out / "manifest.json", _manifest(args, problem, {
        "backend": args.backend,
        "power_model": args.power_model,
    }))
    print(
        f"schedule: objective {result.solution.objective:.4f} $, "
        f"status {result.report.status}, signal {result.signal.values.shape}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    run_dir = Path(args.run)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"run directory {run_dir} has no manifest.json")
    manifest = json.loads(manifest_path.read_text())
    resolved = manifest.get("resolved", {})
    cfg = load_config(args.config)
    problem = build_problem(
        cfg,
        count=resolved.get("count"),
        cells=resolved.get("cells"),
        dt_minutes=resolved.get("dt_minutes"),
        epsilon=resolved.get("epsilon"),
    )
    signal = read_signal_csv(run_dir / "signal.csv", sigma=problem.sigma)
    solution = np.load(run_dir / "solution.npz")
    target = DensityVector(solution["rho0"], problem.grid.dx)
    out = _outdir(args) if args.out else run_dir

    seeds = args.seeds or [problem.seed]
    n = args.n if args.n is not None else problem.spec.n_devices
    for seed in seeds:
        ensemble = build_ensemble(
            problem.spec, n, problem.init_mean, problem.init_std, seed,
            capacity_std_kwh=problem.capacity_std_kwh,
        )
        metrics = simulate(
            ensemble, signal, problem.spec, problem.scenario, problem.grid,
            seed=seed, target_density=target,
            scheduled_p_agg=solution["p_agg"] * n / problem.spec.n_devices,
        )
        _write_json(out / f"metrics_seed{seed}.json", metrics.to_json_dict())
        with open(out / f"trajectory_seed{seed}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "p_agg_kw", "pg_kw"])
            for t in range(problem.grid.n_steps):
                writer.writerow([t, repr(metrics.p_agg[t]), repr(metrics.pg[t])])
        np.savetxt(
            out / f"terminal_histogram_seed{seed}.csv",
            metrics.terminal_histogram.values,
            delimiter=",",
            fmt="%.17g",
        )
        print(
            f"simulate seed {seed}: cost {metrics.cost:.4f} $, "
            f"violation {metrics.soc_violation_kwh_per_device:.4g} kWh/device, "
            f"cyclic deviation {metrics.cyclic_deviation_kwh_per_device:.4g} kWh/device"
        )
    _write_json(out / "manifest_simulate.json", _manifest(args, problem, {
        "seeds": list(seeds), "n_devices": n, "schedule_run": str(run_dir),
    }))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    problem = _problem_from_args(args)
    out = _outdir(args)
    result = run_benchmark(
        problem, seed=args.seed, backend=args.backend, time_limit_s=args.time_limit
    )
    _write_json(out / "benchmark.json", {
        "n_devices": result.n_devices,
        "macro_objective": result.macro_objective,
        "device_objective": result.device_objective,
        "gap": result.gap,
        "macro_wall_time_s": result.macro_report.wall_time_s,
        "device_wall_time_s": result.device_report.wall_time_s,
    })
    _write_json(out / "manifest.json", _manifest(args, problem, {"seed": args.seed}))
    print(
        f"benchmark: macro {result.macro_objective:.4f} $, "
        f"device {result.device_objective:.4f} $, gap {result.gap * 100:.3f} %"
    )
    return EXIT_OK


def _parse_floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v != ""]


def _parse_ints(text: str) -> list:
    return [int(v) for v in text.split(",") if v != ""]


def _parse_resolutions(text: str) -> list:
    pairs = []
    for item in text.split(","):
        if not item:
            continue
        dt_min, cells = item.split(":")
        pairs.append((float(dt_min), int(cells)))
    return pairs


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(args)
    seeds = args.seeds or [0, 1, 2, 3, 4]

    if args.axis == "eps":
        values = _parse_floats(args.values) if args.values else [0.0, 0.02, 0.05, 0.1]
        rows = sweep_epsilon(
            lambda eps: build_problem(cfg, profile=args.profile, count=args.n, epsilon=eps),
            values, seeds, backend=args.backend,
        )
    elif args.axis == "population":
        values = _parse_ints(args.values) if args.values else [100, 1000, 10000]
        rows = sweep_population(
            lambda n: build_problem(cfg, profile=args.profile, count=n),
            values, seeds, backend=args.backend,
        )
    elif args.axis == "resolution":
        values = (
            _parse_resolutions(args.values)
            if args.values
            else [(15.0, 50), (5.0, 100), (1.0, 200)]
        )
        rows = sweep_resolution(
            lambda dt_min, cells: build_problem(
                cfg, count=args.n, cells=cells, dt_minutes=dt_min
            ),
            values, seeds, backend=args.backend, benchmark_seed=seeds[0],
        )
    else:
        raise ConfigError(f"unknown sweep axis '{args.axis}'")

    path = out / f"sweep_{args.axis}.csv"
    fieldnames: list = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    _write_json(out / "manifest.json", _manifest(args, None, {
        "axis": args.axis, "seeds": list(seeds), "rows": len(rows),
        "config_sha256": cfg.sha256,
    }))
    failures = [r for r in rows if r.get("status") != "ok"]
    print(f"sweep {args.axis}: {len(rows)} cells, {len(failures)} failures -> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    if not run_dir.exists():
        raise ConfigError(f"run directory {run_dir} does not exist")
    summary: dict = {"run": str(run_dir), "artifacts": {}}
    for path in sorted(run_dir.glob("*.json")):
        if path.name == "report.json":
            continue
        try:
            summary["artifacts"][path.name] = json.loads(path.read_text())
        except json.JSONDecodeError:
            summary["artifacts"][path.name] = "unreadable"
    for path in sorted(run_dir.glob("*.csv")):
        with open(path) as fh:
            n_lines = sum(1 for _ in fh)
        summary["artifacts"][path.name] = f"csv with {n_lines} lines"
    _write_json(run_dir / "report.json", summary)
    for name, content in summary["artifacts"].items():
        if isinstance(content, dict):
            keys = ", ".join(sorted(content)[:6])
            print(f"{name}: {keys}")
        else:
            print(f"{name}: {content}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eulerflex",
        description="Population-density scheduling and decentralized execution "
                    "for storage-like device fleets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--profile", choices=sorted(PROFILES), default=None,
                       help="grid profile override")
        p.add_argument("--backend", default="highs",
                       choices=("highs", "highs-ds", "highs-ipm"))
        p.add_argument("--time-limit", type=float, default=None, dest="time_limit")

    p = sub.add_parser("operators", help="write the discrete operators and diagnostics")
    common(p)
    p.set_defaults(func=cmd_operators)

    p = sub.add_parser("schedule", help="solve the population scheduling LP")
    common(p)
    p.add_argument("--n", type=int, default=None, help="override population size")
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--dt-minutes", type=float, default=None, dest="dt_minutes")
    p.add_argument("--eps", type=float, default=None, help="cyclicity budget override")
    p.add_argument("--power-model", default=PowerModel.ENERGY_BALANCED.value,
                   choices=[m.value for m in PowerModel], dest="power_model")
    p.add_argument("--export-mps", action="store_true", dest="export_mps")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("simulate", help="Monte-Carlo execution of a stored schedule")
    common(p)
    p.add_argument("--run", required=True, help="directory with schedule artifacts")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", type=_parse_ints, default=None)
    p.add_argument("--n", type=int, default=None, help="simulated fleet size")
    p.set_defaults(func=cmd_simulate, out=None)

    p = sub.add_parser("benchmark", help="device-level benchmark on a sampled fleet")
    common(p)
    p.add_argument("--n", type=int, default=None, help="fleet size for the benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--dt-minutes", type=float, default=None, dest="dt_minutes")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="parameter sweeps with tidy CSV output")
    common(p)
    p.add_argument("--axis", required=True, choices=("eps", "population", "resolution"))
    p.add_argument("--values", default=None,
                   help="comma list; resolution axis uses dt:K pairs like 15:50,1:200")
    p.add_argument("--seeds", type=_parse_ints, default=None)
    p.add_argument("--n", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize the artifacts of a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    # seeds list fix-up: argparse delivers None when --seeds absent
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None and getattr(args, "seeds", None) is None \
            and args.command == "simulate":
        args.seeds = [args.seed]
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except ValidationError as err:
        print(f"validation failure: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
