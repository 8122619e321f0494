"""Command-line experiment driver.

Subcommands: ``solve``, ``beampattern``, ``sweep``, ``convergence`` and
``gradcheck``. Every run writes ``provenance.json`` next to its outputs.
Exit codes: 0 success, 2 configuration error, 3 infeasible result (``solve
--require-feasible`` only).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, manifold
from .config import RunConfig, apply_sweep_value, load_config, normalize_sweep_parameter, scenario_dict
from .metrics import beampattern_sweep, lifted_gains, lifted_sinrs
from .model import ChannelSet, ConfigError, Problem, ScenarioConfig, generate_scenario, watts_to_dbm
from .optimizer import (
    TRACE_FIELDS,
    FpState,
    MultiplierState,
    SolverOptions,
    augmented_lagrangian,
    constraint_scales,
    euclidean_gradient,
    num_gradient_terms,
    options_dict,
    solve,
)
from .oracle import finite_difference_gradient

log = logging.getLogger("sgalm")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


# -- outputs ------------------------------------------------------------------


def _num(x):
    """Locale-independent numeric text."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_provenance(out_dir, command, run: RunConfig | None, seed, extra=None):
    block = {"command": command, "version": __version__, "seed": seed}
    if run is not None:
        block["scenario"] = scenario_dict(run.scenario)
        block["solver"] = options_dict(run.solver)
        block["trials"] = run.trials
        if run.sweep_parameter:
            block["sweep_parameter"] = run.sweep_parameter
            block["sweep_values"] = run.sweep_values
    if extra:
        block.update(extra)
    write_json(Path(out_dir) / "provenance.json", block)


def write_trace(path, trace):
    write_csv(
        path,
        TRACE_FIELDS,
        ([getattr(row, f) for f in TRACE_FIELDS] for row in trace),
    )


def write_channels(path, scenario):
    rows = []
    ch = scenario.channels
    for kind, F in (("user", ch.H), ("target", ch.G)):
        for j in range(F.shape[1]):
            for m in range(F.shape[0]):
                rows.append((j, kind, m, F[m, j].real, F[m, j].imag))
    write_csv(path, ("node_id", "node_kind", "antenna_index", "re", "im"), rows)


def summary(result, run: RunConfig, seed):
    return {
        "config": scenario_dict(run.scenario),
        "method": run.solver.method,
        "seed": seed,
        "sum_rate": result.sum_rate,
        "sinr_db": (10 * np.log10(np.maximum(result.sinr, 1e-300))).tolist(),
        "gain_dbm": watts_to_dbm(result.gains).tolist(),
        "gain_watts": result.gains.tolist(),
        "transmit_power_watts": float(np.vdot(result.V, result.V).real),
        "max_violation": result.max_violation,
        "feasible": bool(result.feasible),
        "iterations": {
            "fp_rounds": result.fp_rounds,
            "alm_rounds": result.alm_rounds,
            "inner": result.inner_iterations,
        },
        "grad_norm": {
            "initial": result.initial_grad_norm,
            "final": result.final_grad_norm,
            "stationarity": result.stationarity,
        },
        "wall_time_s": result.wall_time,
    }


# -- running ------------------------------------------------------------------


def seeded(run: RunConfig, seed: int) -> RunConfig:
    return dataclasses.replace(
        run,
        scenario=dataclasses.replace(run.scenario, rng_seed=seed),
        solver=dataclasses.replace(run.solver, rng_seed=seed),
    )


def run_once(run: RunConfig):
    scenario = generate_scenario(run.scenario)
    return scenario, solve(scenario.problem, run.solver)


def _trial(job):
    run, value, trial = job
    scenario, result = run_once(run)
    return {
        "sweep_value": value,
        "trial": trial,
        "seed": run.scenario.rng_seed,
        "sum_rate": result.sum_rate,
        "feasible": bool(result.feasible),
        "max_violation": result.max_violation,
        "wall_time_s": result.wall_time,
        "inner_iterations": result.inner_iterations,
        "time_per_iteration_s": result.time_per_iteration,
    }


def run_sweep(run: RunConfig, parameter, values, trials, seed, workers=1):
    """Independent trials over a parameter grid; results ordered by (value, trial).

    Trial ``i`` uses seed ``seed + i`` for both geometry and solver at every
    sweep value, so points share their random scenarios.
    """
    jobs = []
    for value in values:
        point = apply_sweep_value(run, parameter, value)
        for i in range(trials):
            jobs.append((seeded(point, seed + i), value, i))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_trial, jobs))
    else:
        records = [_trial(j) for j in jobs]
    return records


def aggregate(records, values):
    rows = []
    for value in values:
        rs = [r for r in records if r["sweep_value"] == value]
        rates = np.array([r["sum_rate"] for r in rs])
        rows.append(
            {
                "sweep_value": value,
                "mean_sum_rate": float(rates.mean()),
                "std_sum_rate": float(rates.std()),
                "feasibility_rate": float(np.mean([r["feasible"] for r in rs])),
                "mean_wall_time_s": float(np.mean([r["wall_time_s"] for r in rs])),
                "trials": len(rs),
            }
        )
    return rows


def gradcheck(M=17, K=2, N=2, trials=20, seed=0, corrupt=False, tol=1e-5):
    """Compare the analytic Lagrangian gradient with central differences.

    States are random: point on the sphere, SINR auxiliaries, multipliers,
    penalty weight, and thresholds placed around the point's own metrics so
    that roughly half the hinges are active.
    """
    if M < 3 or K < 1 or N < 0 or trials < 1:
        raise ConfigError("gradcheck needs M >= 3, K >= 1, N >= 0, trials >= 1")
    if M % 2 == 0:
        raise ConfigError("gradcheck needs an odd antenna count")
    rng = np.random.default_rng(seed)
    angles = tuple(np.linspace(-60, 60, N)) if N else ()
    cfg = ScenarioConfig(
        num_antennas=M,
        num_users=K,
        num_targets=N,
        beampattern_thresholds=(1e-6,) * N,
        rate_thresholds=(1.0,) * K,
        target_angles=angles,
        rng_seed=seed,
    )
    channels = generate_scenario(cfg).channels
    errors = []
    for _ in range(trials):
        X = manifold.random_point((M + 1, K + N), rng)
        base = Problem(channels, cfg.noise_power)
        Omega = lifted_gains(X, base) * rng.uniform(0.5, 1.5, N)
        Gamma = lifted_sinrs(X, base) * rng.uniform(0.5, 1.5, K)
        problem = Problem(channels, cfg.noise_power, Omega, Gamma)
        fp = FpState(mu=rng.uniform(0, 5, K))
        mult = MultiplierState(
            lam=rng.uniform(0, 2, N) * (rng.random(N) < 0.7),
            kappa=rng.uniform(0, 2, K) * (rng.random(K) < 0.7),
            rho=float(rng.uniform(0.5, 5)),
        )
        scales = constraint_scales(problem)
        G = euclidean_gradient(X, fp, mult, problem, scales=scales)
        if corrupt:
            G = G + 0.01 * euclidean_gradient(X, fp, mult, problem, batch=[0], scales=scales) / num_gradient_terms(problem)
        G_fd = finite_difference_gradient(lambda Y: augmented_lagrangian(Y, fp, mult, problem, scales), X)
        errors.append(float(np.linalg.norm(G - G_fd) / np.linalg.norm(G_fd)))
    errors = np.array(errors)
    return {
        "max_rel_err": float(errors.max()),
        "mean_rel_err": float(errors.mean()),
        "trials": int(trials),
        "pass": bool(errors.max() <= tol),
        "dims": {"M": M, "K": K, "N": N},
    }


# -- subcommands --------------------------------------------------------------


def _load(args) -> RunConfig:
    run = load_config(args.config)
    if args.method:
        run = dataclasses.replace(run, solver=dataclasses.replace(run.solver, method=args.method))
    if getattr(args, "trials", None):
        run.trials = args.trials
    if getattr(args, "workers", None):
        run.workers = args.workers
    return run


def _seed(args, run):
    return args.seed if args.seed is not None else run.scenario.rng_seed


def cmd_solve(args) -> int:
    run = _load(args)
    seed = _seed(args, run)
    run = seeded(run, seed)
    out = Path(args.out)
    scenario, result = run_once(run)
    info = summary(result, run, seed)
    write_json(out / "summary.json", info)
    if args.trace:
        write_trace(out / "trace.csv", result.trace)
    if args.dump_channels:
        write_channels(out / "channels.csv", scenario)
    write_provenance(out, "solve", run, seed)
    print(json.dumps(info, indent=2, sort_keys=True))
    if args.require_feasible and not result.feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_beampattern(args) -> int:
    run = _load(args)
    seed = _seed(args, run)
    run = seeded(run, seed)
    out = Path(args.out)
    scenario, result = run_once(run)
    n = int(round((args.angle_max - args.angle_min) / args.angle_step)) + 1
    grid = args.angle_min + args.angle_step * np.arange(n)
    angles, gains, dbm = beampattern_sweep(result.V, run.scenario, grid, args.reference_range)
    write_csv(out / "beampattern.csv", ("angle_deg", "gain_watts", "gain_dbm"), zip(angles, gains, dbm))
    write_json(out / "summary.json", summary(result, run, seed))
    write_provenance(out, "beampattern", run, seed, {"reference_range_m": args.reference_range})
    if args.dump_channels:
        write_channels(out / "channels.csv", scenario)
    print(out / "beampattern.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = _load(args)
    seed = _seed(args, run)
    parameter = normalize_sweep_parameter(args.param) if args.param else run.sweep_parameter
    values = [v.strip() for v in args.values.split(",")] if args.values else run.sweep_values
    if parameter is None or not values:
        raise ConfigError("sweep needs a parameter and a list of values (--param/--values or config)")
    for v in values:
        apply_sweep_value(run, parameter, v)
    run.sweep_parameter, run.sweep_values = parameter, values
    out = Path(args.out)
    records = run_sweep(run, parameter, values, run.trials, seed, run.workers)
    rows = aggregate(records, values)
    header = ("sweep_value", "mean_sum_rate", "std_sum_rate", "feasibility_rate", "mean_wall_time_s")
    write_csv(out / "sweep.csv", header, ([r[h] for h in header] for r in rows))
    trial_header = tuple(records[0])
    write_csv(out / "trials.csv", trial_header, ([r[h] for h in trial_header] for r in records))
    write_provenance(out, "sweep", run, seed)
    print(out / "sweep.csv")
    return EXIT_OK


def cmd_convergence(args) -> int:
    run = _load(args)
    seed = _seed(args, run)
    run = seeded(run, seed)
    out = Path(args.out)
    _, result = run_once(run)
    write_trace(out / "trace.csv", result.trace)
    write_json(out / "summary.json", summary(result, run, seed))
    write_provenance(out, "convergence", run, seed)
    print(out / "trace.csv")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    report = gradcheck(args.M, args.K, args.N, args.trials, seed, corrupt=args.corrupt)
    if args.out:
        write_json(Path(args.out) / "gradcheck.json", report)
        write_provenance(args.out, "gradcheck", None, seed, {"dims": report["dims"]})
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat key = value run file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default="out")
    common.add_argument("--method", choices=("sgd", "sd", "cg"), default=None)
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--workers", type=int, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sgalm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="solve one scenario")
    p.add_argument("--trace", action="store_true", help="also write trace.csv")
    p.add_argument("--dump-channels", action="store_true")
    p.add_argument("--require-feasible", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("beampattern", parents=[common], help="solve, then sweep gain over angle")
    p.add_argument("--angle-min", type=float, default=-90.0)
    p.add_argument("--angle-max", type=float, default=90.0)
    p.add_argument("--angle-step", type=float, default=0.5)
    p.add_argument("--reference-range", type=float, default=20.0)
    p.add_argument("--dump-channels", action="store_true")
    p.set_defaults(func=cmd_beampattern)

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over M, omega or method")
    p.add_argument("--param", default=None, help="M, omega (dBm) or method")
    p.add_argument("--values", default=None, help="comma-separated sweep values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("convergence", parents=[common], help="write the per-iteration trace")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("gradcheck", help="finite-difference check of the Lagrangian gradient")
    p.add_argument("--M", type=int, default=17)
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
