"""Command-line benchmark harness.

Four subcommands (`ep1`, `ep2`, `rayleigh`, `sharpe`) generate seeded problem
instances, run the chosen solver, and write three kinds of output:

* ``<out>``                  aggregate JSON with means/medians,
* ``<out stem>_trials.jsonl`` one JSON record per trial,
* ``<trace-dir>/trial_NNN.csv`` per-run iterate traces (optional).

Everything except the "timing" fields (and the elapsed_ms trace column) is a
pure function of the command line and the seed, so repeating a command
reproduces the files byte-for-byte modulo timing.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import experiments as xp

EXPERIMENTS = ("ep1", "ep2", "rayleigh", "sharpe")

DEFAULTS = {
    "ep1": dict(trials=5, tol=1e-12, max_iters=200, alpha_extrap=0.0, delta=4.0),
    "ep2": dict(trials=20, tol=1e-9, max_iters=5000, alpha_extrap=0.99, delta=1.0),
    "rayleigh": dict(trials=10, tol=1e-10, max_iters=60000, alpha_extrap=0.0, delta=None),
    "sharpe": dict(trials=5, tol=1e-9, max_iters=20000, alpha_extrap=0.0, delta=1.0),
}

SCALES = {
    "ep2": {"desk": xp.DESK_EP2, "paper": xp.PAPER_EP2},
    "rayleigh": {"desk": dict(n=20), "paper": dict(n=100)},
    "sharpe": {"desk": dict(n=10, m1=3, m2=3), "paper": dict(n=30, m1=5, m2=5)},
    "ep1": {"desk": {}, "paper": {}},
}


def _add_common_flags(sub, name):
    d = DEFAULTS[name]
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--trials", type=int, default=d["trials"])
    sub.add_argument("--tol", type=float, default=d["tol"])
    sub.add_argument("--max-iters", type=int, default=d["max_iters"])
    sub.add_argument("--alpha-extrap", type=float, default=d["alpha_extrap"],
                     help="extrapolation strength in [0, 1); 0 disables it")
    sub.add_argument("--delta", type=float, default=d["delta"],
                     help="step-size constant (tau = 1/delta when the ratio term is inactive)")
    sub.add_argument("--n0", type=int, default=50, help="momentum restart period")
    sub.add_argument("--schedule", choices=("fista", "constant"), default="fista")
    sub.add_argument("--algorithm", choices=("epsg", "enhanced"),
                     default="enhanced" if name == "sharpe" else "epsg")
    sub.add_argument("--scale", choices=("desk", "paper"), default="desk")
    sub.add_argument("--out", default=f"{name}_results.json")
    sub.add_argument("--trace-dir", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fracprox",
        description="Benchmark harness for the fractional-program solvers")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub = subs.add_parser(name)
        _add_common_flags(sub, name)
    return parser


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=2)
        handle.write("\n")


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(json.dumps(rec, sort_keys=True) + "\n")


def _trials_path(out):
    stem, _ = os.path.splitext(out)
    return f"{stem}_trials.jsonl"


def _maybe_trace(result, args, trial):
    if args.trace_dir and result is not None:
        os.makedirs(args.trace_dir, exist_ok=True)
        result.trace.to_csv(os.path.join(args.trace_dir, f"trial_{trial:03d}.csv"))


def _emit(args, params, records, agg_fields, diagnostics):
    records_sorted = sorted(records, key=lambda r: r["trial"])
    _write_jsonl(_trials_path(args.out), records_sorted)
    timing_values = [r["timing"]["cpu_seconds"] for r in records_sorted]
    agg = xp.aggregate(records_sorted, agg_fields)
    doc = {
        "experiment": args.command,
        "seed": args.seed,
        "trials": args.trials,
        "params": params,
        "aggregate": agg,
        "diagnostics": diagnostics,
        "timing": {
            "cpu_seconds_mean": float(np.mean(timing_values)) if timing_values else None,
            "cpu_seconds_median": float(np.median(timing_values)) if timing_values else None,
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        },
    }
    _write_json(args.out, doc)
    return doc


def _cmd_ep1(args):
    records = []
    for k in range(args.trials):
        rng = xp.trial_stream(args.seed, k)
        x0 = float(rng.uniform(-1.0, 1.0))
        record, result = xp.run_ep1(
            x0, algorithm=args.algorithm, tol=args.tol, max_iters=args.max_iters,
            alpha_extrap=args.alpha_extrap, delta=args.delta, n0=args.n0,
            schedule=args.schedule)
        record["trial"] = k
        records.append(record)
        _maybe_trace(result, args, k)
    diagnostics = {
        "merit_decrease_ok": all(r["merit_decrease_violation"] is None for r in records),
        "all_converged": all(r["status"] == "converged" for r in records),
    }
    params = dict(algorithm=args.algorithm, delta=args.delta, tol=args.tol,
                  alpha_extrap=args.alpha_extrap, n0=args.n0, schedule=args.schedule)
    return _emit(args, params, records,
                 ["distance_to_stationary", "theta_final", "iterations"], diagnostics)


def _cmd_ep2(args):
    shape = SCALES["ep2"][args.scale]
    records = []
    for k in range(args.trials):
        instance = xp.gen_ep2(shape["p"], shape["n"], shape["s"], shape["f"],
                              args.seed, trial=k)
        record, result, _ = xp.run_ep2(
            instance, tol=args.tol, max_iters=args.max_iters,
            alpha_extrap=args.alpha_extrap, delta=args.delta, n0=args.n0,
            schedule=args.schedule)
        det, timing = record.payload()
        det["timing"] = timing
        records.append(det)
        _maybe_trace(result, args, k)
    diagnostics = {
        "all_terminated": all(r["status"] == "converged" for r in records),
        "objective_nonincreasing": all(
            r["objective_final"] <= r["objective_init"] + 1e-9
            for r in records if np.isfinite(r["objective_final"])),
    }
    params = dict(**shape, delta=args.delta, tol=args.tol,
                  alpha_extrap=args.alpha_extrap, n0=args.n0, schedule=args.schedule,
                  sparsity_threshold=xp.SPARSITY_THRESHOLD)
    return _emit(args, params, records,
                 ["sparsity_init", "sparsity_final", "err_ground_truth",
                  "objective_final", "iterations"], diagnostics)


def _cmd_rayleigh(args):
    shape = SCALES["rayleigh"][args.scale]
    records = []
    for k in range(args.trials):
        a, b = xp.gen_rayleigh(shape["n"], args.seed, trial=k)
        x0 = xp.trial_stream(args.seed, k, substream=1).standard_normal(shape["n"])
        record, result = xp.run_rayleigh(
            a, b, x0, tol=args.tol, max_iters=args.max_iters, delta=args.delta,
            alpha_extrap=args.alpha_extrap, n0=args.n0, schedule=args.schedule)
        record["trial"] = k
        records.append(record)
        _maybe_trace(result, args, k)
    diagnostics = {
        "merit_decrease_ok": all(r["merit_decrease_violation"] is None for r in records),
        "max_stationarity_residual": max(r["stationarity_residual"] for r in records),
        "max_eigenvalue_gap": max(r["eigenvalue_gap"] for r in records),
    }
    params = dict(**shape, delta=args.delta, tol=args.tol,
                  alpha_extrap=args.alpha_extrap, n0=args.n0, schedule=args.schedule)
    return _emit(args, params, records,
                 ["theta_final", "stationarity_residual", "eigenvalue_gap",
                  "iterations"], diagnostics)


def _cmd_sharpe(args):
    shape = SCALES["sharpe"][args.scale]
    records = []
    for k in range(args.trials):
        instance = xp.gen_sharpe(shape["n"], shape["m1"], shape["m2"],
                                 args.seed, trial=k)
        record, result = xp.run_sharpe(
            instance, tol=args.tol, max_iters=args.max_iters,
            alpha_extrap=args.alpha_extrap, delta=args.delta, n0=args.n0,
            schedule=args.schedule, algorithm=args.algorithm)
        record["trial"] = k
        records.append(record)
        _maybe_trace(result, args, k)
    diagnostics = {
        "merit_decrease_ok": all(r["merit_decrease_violation"] is None for r in records),
        "max_strong_residual": max(r["max_strong_residual"] for r in records),
        "all_terminated": all(r["status"] == "converged" for r in records),
    }
    params = dict(**shape, delta=args.delta, tol=args.tol, algorithm=args.algorithm,
                  alpha_extrap=args.alpha_extrap, n0=args.n0, schedule=args.schedule)
    return _emit(args, params, records,
                 ["theta_final", "max_strong_residual", "iterations"], diagnostics)


COMMANDS = {"ep1": _cmd_ep1, "ep2": _cmd_ep2, "rayleigh": _cmd_rayleigh,
            "sharpe": _cmd_sharpe}


def main(argv=None):
    args = build_parser().parse_args(argv)
    doc = COMMANDS[args.command](args)
    agg = doc["aggregate"]["mean"]
    summary = ", ".join(f"{k}={v:.6g}" for k, v in agg.items() if v is not None)
    print(f"{args.command}: {args.trials} trials -> {args.out} ({summary})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
