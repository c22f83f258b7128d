"""Command-line front end.

Subcommands
-----------
run <kind>        run an experiment from a scenario (bundled name or path)
rerun             re-execute an experiment from a manifest, bit-identically
export-plot       turn a sweep CSV into plot-ready boundary/verdict files
scenarios         list the bundled scenario library

Every run writes its result files plus ``manifest.json`` recording the fully
resolved inputs (scenario document after overrides, kind, seed), a hash of
those inputs, library versions and wall time. Re-running from the manifest
reproduces the result files byte for byte; the manifest itself differs only
in wall time.

Exit codes: 0 success, 2 scenario parse error, 3 validation error,
4 schedule-space guard tripped, 5 LP solver failure. Errors also emit a JSON
diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .capacity import SolverError, membership
from .dynamics import (SimConfig, simulate_joint, simulate_separated,
                       timescale_convergence, uniform_sample_times)
from .equilibrium import equilibrium
from .schedule import ScheduleSpaceError, enumerate_feasible
from .scenario import (ExperimentConfig, Scenario, ScenarioError,
                       ScenarioValidationError, SweepAxis, bundled_scenarios,
                       dump_scenario, load_scenario, load_scenario_text,
                       parse_scenario, scenario_to_document)
from .stability import (StabilityThresholds, bowtie_boundary, fluid_slope,
                        homogeneous_critical_load, optimal_center_bound,
                        center_rate_polynomial)
from .topology import CsmaParams

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_GUARD = 4
EXIT_SOLVER = 5

OUTPUT_ROOT_ENV = "MCCSMA_OUTPUT_ROOT"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _diag(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


def _canonical_inputs(kind: str, seed: int, scenario: Scenario, overrides: dict) -> dict:
    return {
        "kind": kind,
        "seed": seed,
        "scenario": scenario_to_document(scenario),
        "overrides": overrides,
    }


def _config_hash(inputs: dict) -> str:
    blob = json.dumps(inputs, sort_keys=True, separators=(",", ":")).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def apply_overrides(scenario: Scenario, args: argparse.Namespace) -> tuple[Scenario, dict]:
    """Command-line values beat scenario-file values, field by field."""
    overrides: dict = {}
    exp = scenario.experiment
    csma = scenario.csma
    if getattr(args, "alpha", None) is not None:
        overrides["alpha"] = args.alpha
        nu = tuple(args.alpha * p for p in csma.phys_rate)
        csma = CsmaParams(csma.phys_rate, nu, csma.probe_prob)
    if getattr(args, "policy", None):
        overrides["policy"] = args.policy
        exp = replace(exp, policy=args.policy)
    if getattr(args, "state", None):
        state = tuple(int(v) for v in args.state.split(","))
        overrides["state"] = list(state)
        exp = replace(exp, state=state)
    if getattr(args, "grid", None) is not None:
        overrides["grid"] = args.grid
        exp = replace(exp, grid=args.grid)
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
        exp = replace(exp, horizon=args.horizon)
    if getattr(args, "replications", None) is not None:
        overrides["replications"] = args.replications
        exp = replace(exp, replications=args.replications)
    if getattr(args, "scaling_n", None) is not None:
        overrides["scaling_n"] = args.scaling_n
        exp = replace(exp, scaling_n=args.scaling_n)
    return replace(scenario, csma=csma, experiment=exp), overrides


def _axis_values(axis: Optional[SweepAxis], grid: int) -> np.ndarray:
    maximum = axis.maximum if axis is not None else 1.0
    return np.linspace(0.0, maximum, grid)


def _sweep_axes(scenario: Scenario) -> tuple[SweepAxis, SweepAxis]:
    exp = scenario.experiment
    K = scenario.network.num_classes
    axis1 = exp.axis1 if exp.axis1 is not None else SweepAxis(tuple(range(K)))
    axis2 = exp.axis2 if exp.axis2 is not None else SweepAxis((K - 1,))
    return axis1, axis2


def _rho_for(scenario: Scenario, axis1: SweepAxis, axis2: SweepAxis,
             v1: float, v2: float) -> np.ndarray:
    rho = np.zeros(scenario.network.num_classes)
    for k in axis1.classes:
        rho[k] = v1
    for k in axis2.classes:
        rho[k] = v2
    return rho


def run_equilibrium(scenario: Scenario, seed: int, outdir: Path) -> list[str]:
    exp = scenario.experiment
    if exp.state is None:
        raise ScenarioValidationError("equilibrium experiment needs a state")
    if len(exp.state) != scenario.network.num_classes:
        raise ScenarioValidationError(
            f"state has {len(exp.state)} entries, expected "
            f"{scenario.network.num_classes}")
    result = equilibrium(exp.state, scenario.csma, scenario.network, exp.policy)
    dist_rows = [(s.as_text(), p) for s, p in sorted(result.distribution.items())]
    _write_csv(outdir / "distribution.csv", ["schedule", "probability"], dist_rows)
    _write_csv(outdir / "throughput.csv", ["class", "throughput"],
               [(k + 1, v) for k, v in enumerate(result.throughput)])
    return ["distribution.csv", "throughput.csv"]


def run_capacity_sweep(scenario: Scenario, seed: int, outdir: Path) -> list[str]:
    exp = scenario.experiment
    axis1, axis2 = _sweep_axes(scenario)
    schedules = enumerate_feasible(scenario.network, None)
    rows = []
    for v1 in _axis_values(axis1, exp.grid):
        for v2 in _axis_values(axis2, exp.grid):
            rho = _rho_for(scenario, axis1, axis2, v1, v2)
            verdict = membership(rho, scenario.network, scenario.csma,
                                 schedules=schedules)
            rows.append((v1, v2, verdict.status, verdict.margin))
    _write_csv(outdir / "sweep.csv", ["load1", "load2", "status", "margin"], rows)
    return ["sweep.csv"]


def _trajectory_csv(outdir: Path, name: str, traj, num_channels: int,
                    with_schedule: bool) -> str:
    K = len(traj.final_state)
    header = ["time"] + [f"x{k + 1}" for k in range(K)]
    if with_schedule:
        header += [f"y{k + 1}_{j + 1}" for k in range(K) for j in range(num_channels)]
    rows = []
    for s in traj.samples:
        row = [s.time, *s.state]
        if with_schedule:
            flat = (tuple(v for r in s.schedule.active for v in r)
                    if s.schedule is not None else (0,) * (K * num_channels))
            row += list(flat)
        rows.append(row)
    _write_csv(outdir / name, header, rows)
    return name


def run_simulate(scenario: Scenario, seed: int, outdir: Path) -> list[str]:
    exp = scenario.experiment
    K = scenario.network.num_classes
    initial = exp.initial_state if exp.initial_state is not None else (0,) * K
    joint = exp.scaling_n >= 1
    outputs = []
    trajectories = []
    for rep in range(exp.replications):
        cfg = SimConfig(policy=exp.policy, horizon=exp.horizon, seed=seed,
                        initial_state=initial,
                        scaling_n=max(exp.scaling_n, 1),
                        sample_times=uniform_sample_times(exp.horizon, exp.sample_count),
                        max_total_flows=exp.max_total_flows,
                        replication=rep)
        traj = (simulate_joint(scenario.network, scenario.csma, scenario.traffic, cfg)
                if joint else
                simulate_separated(scenario.network, scenario.csma, scenario.traffic, cfg))
        trajectories.append(traj)
        outputs.append(_trajectory_csv(outdir, f"trajectory_{rep}.csv", traj,
                                       scenario.network.num_channels, joint))
    _write_csv(outdir / "summary.csv",
               ["replication", "aborted", *(f"arrivals{k + 1}" for k in range(K)),
                *(f"departures{k + 1}" for k in range(K)),
                *(f"mean_flows{k + 1}" for k in range(K))],
               [(rep, str(tr.aborted).lower(), *tr.arrivals, *tr.departures,
                 *(v / tr.final_time for v in tr.time_integral_flows))
                for rep, tr in enumerate(trajectories)])
    outputs.append("summary.csv")
    if exp.replications >= 5:
        verdict = fluid_slope(trajectories)
        (outdir / "verdict.json").write_text(json.dumps({
            "verdict": verdict.verdict,
            "slope": verdict.slope,
            "ci_lo": verdict.ci_lo,
            "ci_hi": verdict.ci_hi,
            "per_class_slopes": list(verdict.per_class_slopes),
            "mean_total_flows": verdict.mean_total_flows,
        }, indent=2, sort_keys=True) + "\n")
        outputs.append("verdict.json")
    return outputs


def run_stability_sweep(scenario: Scenario, seed: int, outdir: Path) -> list[str]:
    exp = scenario.experiment
    axis1, axis2 = _sweep_axes(scenario)
    rows = []
    for v1 in _axis_values(axis1, exp.grid):
        for v2 in _axis_values(axis2, exp.grid):
            rho = _rho_for(scenario, axis1, axis2, v1, v2)
            sigma = np.asarray(scenario.traffic.mean_flow_size)
            lam = tuple(float(r) / s for r, s in zip(rho, sigma))
            traffic = replace(scenario.traffic, arrival_rate=lam)
            trajectories = []
            for rep in range(exp.replications):
                cfg = SimConfig(policy=exp.policy, horizon=exp.horizon, seed=seed,
                                initial_state=(0,) * scenario.network.num_classes,
                                sample_times=uniform_sample_times(exp.horizon,
                                                                  exp.sample_count),
                                max_total_flows=exp.max_total_flows,
                                replication=rep)
                trajectories.append(simulate_separated(scenario.network, scenario.csma,
                                                       traffic, cfg))
            verdict = fluid_slope(trajectories)
            rows.append((v1, v2, verdict.verdict, verdict.slope,
                         verdict.ci_lo, verdict.ci_hi))
    _write_csv(outdir / "stability.csv",
               ["load1", "load2", "verdict", "slope", "ci_lo", "ci_hi"], rows)
    return ["stability.csv"]


def run_timescale(scenario: Scenario, seed: int, outdir: Path) -> list[str]:
    exp = scenario.experiment
    K = scenario.network.num_classes
    initial = exp.initial_state if exp.initial_state is not None else (0,) * K
    table = timescale_convergence(
        scenario.network, scenario.csma, scenario.traffic,
        n_values=exp.n_values, t_probe=exp.t_probe,
        replications=exp.replications, seed=seed, policy=exp.policy,
        initial_state=initial)
    _write_csv(outdir / "distances.csv", ["scaling_n", "distance", "ci_lo", "ci_hi"],
               [(r.scaling_n, r.distance, r.ci_lo, r.ci_hi) for r in table.rows])
    return ["distances.csv"]


_RUNNERS = {
    "equilibrium": run_equilibrium,
    "capacity-sweep": run_capacity_sweep,
    "simulate": run_simulate,
    "stability-sweep": run_stability_sweep,
    "timescale": run_timescale,
}


def execute(scenario: Scenario, kind: str, seed: int, outdir: Path,
            overrides: dict) -> Path:
    """Run one experiment and write results plus the manifest."""
    outdir.mkdir(parents=True, exist_ok=True)
    inputs = _canonical_inputs(kind, seed, scenario, overrides)
    started = time.monotonic()
    outputs = _RUNNERS[kind](scenario, seed, outdir)
    manifest = {
        "inputs": inputs,
        "config_hash": _config_hash(inputs),
        "outputs": outputs,
        "versions": {
            "mccsma": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "wall_time_s": time.monotonic() - started,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True)
                                          + "\n")
    return outdir


def export_region_plot(sweep_csv: Path, outdir: Path) -> list[str]:
    """Emit plot-ready boundary polylines and per-point simulation verdicts.

    The two closed-form boundaries describe the bow-tie network: the capacity
    limit of the center-class load against the edge-class load, and the load
    above which the shared-queue policy provably diverges.
    """
    lines = sweep_csv.read_text().splitlines()
    if not lines:
        raise ScenarioError(f"{sweep_csv}: empty file")
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "load1" or header[1] != "load2":
        raise ScenarioError(f"{sweep_csv}: expected columns load1,load2,...")
    points = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        points.append((float(parts[0]), float(parts[1]), parts[2]))

    outdir.mkdir(parents=True, exist_ok=True)
    grid = sorted(set(np.linspace(0.0, 1.0, 101)) | {0.5, 2.0 / 3.0,
                                                     homogeneous_critical_load()})
    _write_csv(outdir / "boundary_optimal.csv", ["load1", "load2"],
               [(r, optimal_center_bound(r)) for r in grid])
    _write_csv(outdir / "boundary_instability.csv", ["load1", "load2"],
               [(r, center_rate_polynomial(r)) for r in grid])
    _write_csv(outdir / "simulation_points.csv", ["load1", "load2", "verdict"], points)
    combined = ([(r, optimal_center_bound(r), "optimal") for r in grid]
                + [(r, center_rate_polynomial(r), "instability") for r in grid]
                + [(a, b, f"simulation:{v}") for a, b, v in points])
    _write_csv(outdir / "region_plot.csv", ["load1", "load2", "source"], combined)
    return ["boundary_optimal.csv", "boundary_instability.csv",
            "simulation_points.csv", "region_plot.csv"]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mccsma",
                                description="Multi-channel CSMA network toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment")
    runp.add_argument("kind", choices=sorted(_RUNNERS.keys()))
    runp.add_argument("--scenario", required=True,
                      help="bundled scenario name or path to a YAML file")
    runp.add_argument("--seed", type=int, default=0)
    runp.add_argument("--output", help="output directory (default under "
                                       f"${OUTPUT_ROOT_ENV} or ./results)")
    runp.add_argument("--policy", choices=["adhoc", "standard_infra", "flow_aware"])
    runp.add_argument("--alpha", type=float,
                      help="override attempt/transmission ratio for every class")
    runp.add_argument("--state", help="comma-separated flow counts (equilibrium)")
    runp.add_argument("--grid", type=int)
    runp.add_argument("--horizon", type=float)
    runp.add_argument("--replications", type=int)
    runp.add_argument("--scaling-n", dest="scaling_n", type=int)

    rerunp = sub.add_parser("rerun", help="re-run an experiment from its manifest")
    rerunp.add_argument("--manifest", required=True)
    rerunp.add_argument("--output", required=True)

    plotp = sub.add_parser("export-plot", help="emit plot data from a sweep CSV")
    plotp.add_argument("--sweep", required=True)
    plotp.add_argument("--output", required=True)

    sub.add_parser("scenarios", help="list bundled scenarios")
    return p


def _default_outdir(scenario_name: str, kind: str, seed: int) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))
    return root / f"{scenario_name}-{kind}-seed{seed}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "scenarios":
            for name in bundled_scenarios():
                print(name)
            return EXIT_OK
        if args.command == "export-plot":
            files = export_region_plot(Path(args.sweep), Path(args.output))
            print("\n".join(files))
            return EXIT_OK
        if args.command == "rerun":
            manifest = json.loads(Path(args.manifest).read_text())
            inputs = manifest["inputs"]
            scenario = parse_scenario(inputs["scenario"])
            outdir = execute(scenario, inputs["kind"], int(inputs["seed"]),
                             Path(args.output), inputs.get("overrides", {}))
            print(outdir)
            return EXIT_OK
        # run
        scenario = load_scenario(args.scenario)
        scenario, overrides = apply_overrides(scenario, args)
        scenario = replace(scenario,
                           experiment=replace(scenario.experiment, kind=args.kind))
        outdir = (Path(args.output) if args.output
                  else _default_outdir(scenario.name, args.kind, args.seed))
        execute(scenario, args.kind, args.seed, outdir, overrides)
        print(outdir)
        return EXIT_OK
    except ScenarioValidationError as exc:
        _diag("validation", str(exc))
        return EXIT_VALIDATION
    except ScenarioError as exc:
        _diag("parse", str(exc))
        return EXIT_PARSE
    except ScheduleSpaceError as exc:
        _diag("schedule-space-guard", str(exc))
        return EXIT_GUARD
    except SolverError as exc:
        _diag("solver", str(exc))
        return EXIT_SOLVER
    except (OSError, json.JSONDecodeError) as exc:
        _diag("io", str(exc))
        return EXIT_PARSE
    except ValueError as exc:
        _diag("validation", str(exc))
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
