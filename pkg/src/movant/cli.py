"""Command line interface: ``run``, ``check`` and ``trace``.

Examples::

    movant run --preset desk --seed 7 --out results/
    movant run --preset desk --scheme proposed-gmm,scsit-upa --sweep power=10,15,20
    movant check --suite gradients --suite solver_kkt
    movant trace --preset desk --seed 3 --out traces/
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import SUITES, run_checks
from .config import PRESETS, SCHEMES, SWEEP_AXES, SystemConfig, load_config, preset
from .sim import (
    emit_results,
    prepare_output,
    realization_records,
    realization_streams,
    run_experiment,
    short_term_trace,
    trace_records,
    write_manifest,
    write_table,
)
from .channel import draw_statistical_state
from .two_timescale import SchemeId, draw_links, run_scheme

log = logging.getLogger("movant")

LONG_TERM_COLUMNS = ["surrogate_value", "alpha", "batch_sum_rate", "eval_sum_rate",
                     "min_distance", "total_power", "min_eigenvalue", "stationarity", "rho",
                     "gamma", "objective_mode", "solver_status"]


def parse_schemes(text: str | None) -> list[str]:
    if not text:
        return list(SCHEMES)
    out = []
    for item in text.split(","):
        item = item.strip()
        if item:
            out.append(SchemeId.parse(item).value)
    if not out:
        raise ValueError("empty scheme list")
    return out


def parse_sweep(text: str | None):
    """``AXIS=v1,v2,...`` -> ``(axis, [floats])``; None when not given."""
    if not text:
        return None
    if "=" not in text:
        raise ValueError(f"sweep must look like AXIS=v1,v2,... (got {text!r})")
    axis, _, values = text.partition("=")
    axis = axis.strip().lower()
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"sweep values must be numbers (got {values!r})") from None
    if not vals or not np.all(np.isfinite(vals)):
        raise ValueError("sweep values must be finite and nonempty")
    return axis, vals


def resolve_config(args) -> SystemConfig:
    """Preset first, then the config file, then ``--seed``/``--realizations``."""
    cfg = preset(args.preset)
    if args.config:
        cfg = load_config(args.config, base=cfg)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "realizations", None) is not None:
        changes["realizations"] = args.realizations
    return cfg.replace(**changes) if changes else cfg


def _common(p: argparse.ArgumentParser, out_default: str):
    p.add_argument("--config", type=Path, help="flat YAML file of config keys")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper",
                   help="parameter preset (default: paper)")
    p.add_argument("--scheme", help=f"comma-separated schemes from {', '.join(SCHEMES)}")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, default=Path(out_default), help="output directory")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="movant", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo experiment")
    _common(run, "results")
    run.add_argument("--sweep", help="AXIS=v1,v2,... with AXIS in " + ", ".join(SWEEP_AXES))
    run.add_argument("--workers", type=_positive, default=1)
    run.add_argument("--realizations", type=_positive, help="override the realization count")
    run.add_argument("--trace", action="store_true",
                     help="store per-iteration convergence traces in the manifest")

    check = sub.add_parser("check", help="oracle and invariant suites")
    check.add_argument("--suite", action="append", choices=sorted(SUITES),
                       help="suite to run (repeatable; default all)")
    check.add_argument("--out", type=Path, help="also write the results as JSON here")

    trace = sub.add_parser("trace", help="convergence dump for one realization")
    _common(trace, "traces")
    trace.add_argument("--realization", type=int, default=0)
    trace.add_argument("--samples", type=_positive,
                       help="held-out samples for the short-term traces (default: config)")
    return parser


def cmd_run(args) -> int:
    out = prepare_output(args.out)  # fail before any computation
    cfg = resolve_config(args)
    schemes = parse_schemes(args.scheme)
    sweep = parse_sweep(args.sweep)
    log.info("running %s over %d realizations", ",".join(schemes), cfg.realizations)
    exp = run_experiment(cfg, schemes=schemes, sweep=sweep, seed=cfg.seed, workers=args.workers,
                         trace=args.trace)
    extra = {"command": "run", "schemes": schemes,
             "sweep": {"axis": exp.sweep_name, "values": exp.sweep_values},
             "per_realization": realization_records(exp)}
    paths = emit_results(exp.rows, out, cfg, extra=extra,
                         traces=trace_records(exp) if args.trace else None)
    for row in exp.rows:
        print(f"{row.scheme:14s} {row.sweep_name}={row.sweep_value:g} "
              f"sum_rate={row.avg_sum_rate:.4f} feasible={row.feasibility_ratio:.3f}")
    print(f"wrote {paths['metrics']} and {paths['manifest']}")
    return 0


def cmd_check(args) -> int:
    if args.out is not None:
        prepare_output(args.out)
    results = run_checks(args.suite)
    for res in results:
        print(res.line())
    if args.out is not None:
        write_manifest(Path(args.out) / "checks.json", {
            "version": __version__,
            "checks": [dict(name=r.name, passed=r.passed, worst=r.worst, tolerance=r.tolerance,
                            count=r.count, detail=r.detail) for r in results],
        })
    return 0 if all(r.passed for r in results) else 1


def cmd_trace(args) -> int:
    out = prepare_output(args.out)
    cfg = resolve_config(args)
    schemes = parse_schemes(args.scheme)
    j = args.realization

    short = []
    for kind in ("ga", "gp"):
        tr = short_term_trace(cfg, cfg.seed, j, kind, args.samples)
        S, K, T = tr["user"].shape
        for s in range(S):
            for k in range(K):
                for it in range(T):
                    short.append([kind, s, k, it, tr["user"][s, k, it]])
    write_table(out / "short_term_trace.csv", ["algorithm", "sample", "user", "iteration", "rate"],
                short)

    streams = realization_streams(cfg.seed, j)
    stat = draw_statistical_state(cfg, np.random.default_rng(streams["stat"]))
    trace_links = draw_links(stat, np.random.default_rng(streams["trace"]),
                             cfg.trace_eval_samples, cfg)
    long_rows = []
    for scheme in schemes:
        sol = run_scheme(scheme, stat, cfg, rng=np.random.default_rng(streams["train"]),
                         trace_links=trace_links)
        tr = sol.trace
        for i in range(sol.n_iter + 1):
            row = [scheme, i]
            for col in LONG_TERM_COLUMNS:
                if col == "eval_sum_rate":
                    row.append(tr[col][i])
                elif i == 0:
                    row.append("")  # initial point: no surrogate solved yet
                else:
                    row.append(tr[col][i - 1])
            long_rows.append(row)
    write_table(out / "long_term_trace.csv", ["scheme", "iteration"] + LONG_TERM_COLUMNS,
                long_rows)
    write_manifest(out / "manifest.json", {
        "package": "movant", "version": __version__, "command": "trace",
        "config": cfg.to_dict(), "schemes": schemes, "realization": j,
        "files": ["short_term_trace.csv", "long_term_trace.csv"],
    })
    print(f"wrote traces for realization {j} to {out}")
    return 0


COMMANDS = {"run": cmd_run, "check": cmd_check, "trace": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"movant {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
