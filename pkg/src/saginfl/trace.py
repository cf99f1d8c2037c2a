"""Trace and summary file emission.

One plain-text trace file per run: the resolved configuration header followed
by CSV sections for accuracy, time, partition, assignment, divergence, the
per-interval bound checks, and the communication log. Floats are written with
repr so reruns of the same configuration are byte-identical.
"""
from __future__ import annotations

from pathlib import Path

from .diagnostics import BoundReport
from .simulation import TrainingTrace

SUMMARY_COLUMNS = ("policy", "n_geo", "seed", "final_accuracy",
                   "total_time_s", "delta_hat", "Delta_hat", "bound_margin")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def render_trace(trace: TrainingTrace, report: BoundReport | None) -> str:
    cfg = trace.config
    lines = ["# saginfl trace v1", "", "[config]"]
    lines.append(cfg.canonical_text().rstrip("\n"))
    if trace.warnings:
        lines.append("")
        lines.append("[warnings]")
        lines.extend(trace.warnings)

    lines.append("")
    lines.append("[accuracy]")
    lines.append("round,t,accuracy")
    for rnd, t, acc in trace.accuracy:
        lines.append(f"{rnd},{t},{_fmt(acc)}")

    lines.append("")
    lines.append("[time]")
    lines.append("round,t_comm,t_comp,t_sync,t_total,n_ss")
    for rnd, b in enumerate(trace.breakdowns, start=1):
        lines.append(f"{rnd},{_fmt(b.t_comm)},{_fmt(b.t_comp)},"
                     f"{_fmt(b.t_sync)},{_fmt(b.t_total)},{b.n_ss}")

    lines.append("")
    lines.append("[partition]")
    lines.append("satellite,part")
    for sat, part in trace.partition_rows:
        lines.append(f"{sat},{part}")

    lines.append("")
    lines.append("[assignment]")
    lines.append("air,satellite,hops")
    for air, sat, hops in trace.assignment_rows:
        lines.append(f"{air},{sat},{hops}")

    lines.append("")
    lines.append("[divergence]")
    lines.append("delta_hat,Delta_hat,rho_hat,beta_hat")
    if report is not None:
        lines.append(f"{_fmt(report.delta_hat)},{_fmt(report.Delta_hat)},"
                     f"{_fmt(report.rho_hat)},{_fmt(report.beta_hat)}")

    lines.append("")
    lines.append("[bound]")
    lines.append("interval,t,gap,bound,margin,holds")
    if report is not None:
        for c in report.intervals:
            lines.append(f"{c.interval},{c.t_end},{_fmt(c.gap)},"
                         f"{_fmt(c.bound)},{_fmt(c.margin)},{int(c.holds)}")

    lines.append("")
    lines.append("[commlog]")
    lines.append("round,phase,step,src,dst,params")
    for rnd, phase, step, src, dst, params in trace.comm_rows:
        lines.append(f"{rnd},{phase},{step},{src},{dst},{params}")
    return "\n".join(lines) + "\n"


def write_trace(trace: TrainingTrace, report: BoundReport | None,
                path: Path) -> None:
    path.write_text(render_trace(trace, report))


def summary_row(trace: TrainingTrace, report: BoundReport | None) -> dict:
    cfg = trace.config
    return {
        "policy": cfg.policy.name,
        "n_geo": cfg.policy.n_geo if cfg.policy.name == "cnasa" else "",
        "seed": cfg.run.seed,
        "final_accuracy": trace.final_accuracy,
        "total_time_s": trace.total_time,
        "delta_hat": report.delta_hat if report else float("nan"),
        "Delta_hat": report.Delta_hat if report else float("nan"),
        "bound_margin": report.max_margin if report else float("nan"),
    }


def write_summary(row: dict, path: Path) -> None:
    header = ",".join(SUMMARY_COLUMNS)
    values = ",".join(_fmt(row[c]) for c in SUMMARY_COLUMNS)
    path.write_text(header + "\n" + values + "\n")
