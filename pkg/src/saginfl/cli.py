"""Experiment runner.

Subcommands: ``run <config>`` executes one configuration and writes the trace,
summary, and topology table; ``sweep <config> --axis --values --seeds`` runs
the cross product and aggregates per-cell statistics; ``validate <config>``
checks a configuration without running. Exit codes: 0 ok, 2 configuration
error, 3 runtime error. SAGINFL_OUTPUT_ROOT overrides the output root.
"""
from __future__ import annotations

import argparse
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .config import (
    AXES,
    ExperimentConfig,
    apply_axis,
    load_config,
    with_seed,
)
from .diagnostics import check_convergence_bound
from .errors import ConfigurationError
from .simulation import run_obl
from .topology import write_topology_table
from .trace import SUMMARY_COLUMNS, _fmt, summary_row, write_summary, write_trace

RUNS_COLUMNS = ("axis", "value", "seed", "final_accuracy", "total_time_s",
                "delta_hat", "Delta_hat", "bound_margin", "status")
AGG_COLUMNS = ("axis", "value", "n_seeds", "accuracy_mean", "accuracy_std",
               "time_mean", "time_std")


def output_dir(cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get("SAGINFL_OUTPUT_ROOT", "."))
    return root / cfg.run.output_dir


def run_stem(cfg: ExperimentConfig) -> str:
    policy = cfg.policy.name
    if policy == "cnasa":
        policy = f"cnasa-{cfg.policy.n_geo}"
    return f"{cfg.run.label}_{policy}_seed{cfg.run.seed}"


def execute_run(cfg: ExperimentConfig, out: Path) -> dict:
    """Run one configuration; write trace, summary, and topology files.

    The convergence diagnostics require the convex learner on full-batch
    gradients; mini-batch or MLP runs skip the bound report.
    """
    trace = run_obl(cfg)
    diagnosable = trace.learner.convex and cfg.training.batch_size == 0
    report = check_convergence_bound(trace) if diagnosable else None
    out.mkdir(parents=True, exist_ok=True)
    stem = run_stem(cfg)
    write_trace(trace, report, out / f"{stem}.trace.txt")
    row = summary_row(trace, report)
    write_summary(row, out / f"{stem}.summary.csv")
    write_topology_table(trace.topology, out / f"{stem}.topology.tsv",
                         coverage=trace.coverage)
    return row


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    row = execute_run(cfg, output_dir(cfg))
    print(",".join(SUMMARY_COLUMNS))
    print(",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS))
    return 0


def _parse_values(axis: str, raw: str) -> list:
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise ConfigurationError("--values must be a non-empty comma list")
    if axis == "sync_algo":
        return items
    try:
        return [int(v) for v in items]
    except ValueError as exc:
        raise ConfigurationError(f"--values for axis {axis} must be integers") from exc


def _cmd_sweep(args) -> int:
    base = load_config(args.config)
    if args.axis not in AXES:
        raise ConfigurationError(f"unknown axis {args.axis!r}; choose from {AXES}")
    values = _parse_values(args.axis, args.values)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigurationError("--seeds must be a comma list of integers") from exc
    if not seeds:
        raise ConfigurationError("--seeds must be non-empty")

    out = output_dir(base) / f"sweep_{args.axis}"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        cell_cfg = apply_axis(base, args.axis, value)
        for seed in seeds:
            cfg = with_seed(cell_cfg, seed)
            try:
                row = execute_run(cfg, out)
                rows.append({
                    "axis": args.axis, "value": value, "seed": seed,
                    "final_accuracy": row["final_accuracy"],
                    "total_time_s": row["total_time_s"],
                    "delta_hat": row["delta_hat"],
                    "Delta_hat": row["Delta_hat"],
                    "bound_margin": row["bound_margin"],
                    "status": "ok",
                })
            except ConfigurationError:
                raise
            except Exception as exc:  # keep sweeping on per-cell failures
                rows.append({
                    "axis": args.axis, "value": value, "seed": seed,
                    "final_accuracy": "", "total_time_s": "",
                    "delta_hat": "", "Delta_hat": "", "bound_margin": "",
                    "status": f"error: {exc}",
                })

    rows.sort(key=lambda r: (str(r["value"]), r["seed"]))
    runs_lines = [",".join(RUNS_COLUMNS)]
    runs_lines += [",".join(_fmt(r[c]) for c in RUNS_COLUMNS) for r in rows]
    (out / "runs.csv").write_text("\n".join(runs_lines) + "\n")

    agg_lines = [",".join(AGG_COLUMNS)]
    for value in sorted({r["value"] for r in rows}, key=str):
        cell = [r for r in rows if r["value"] == value and r["status"] == "ok"]
        if not cell:
            agg_lines.append(f"{args.axis},{value},0,,,,")
            continue
        accs = np.array([r["final_accuracy"] for r in cell], dtype=float)
        times = np.array([r["total_time_s"] for r in cell], dtype=float)
        agg_lines.append(
            f"{args.axis},{value},{len(cell)},{_fmt(float(accs.mean()))},"
            f"{_fmt(float(accs.std()))},{_fmt(float(times.mean()))},"
            f"{_fmt(float(times.std()))}")
    (out / "summary.csv").write_text("\n".join(agg_lines) + "\n")
    print(f"wrote {out / 'runs.csv'} and {out / 'summary.csv'} "
          f"({len(rows)} runs)")
    return 0


def _cmd_validate(args) -> int:
    load_config(args.config)
    print("OK")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="saginfl",
        description="Hierarchical federated learning simulator for "
                    "space-air-ground networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configuration")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True, choices=AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values")
    p_sweep.add_argument("--seeds", required=True,
                         help="comma-separated seeds")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_val = sub.add_parser("validate", help="check a configuration file")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
