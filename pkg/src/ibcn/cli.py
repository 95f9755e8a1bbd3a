"""Command line entry point: ``ibcn run | average | check``.

Exit codes: 0 success, 1 config error, 2 data error, 3 solver abort.
"""

from __future__ import annotations

import argparse
import glob
import sys

from .data_io import DataError, TraceError
from .experiment import (
    ConfigError,
    average_traces,
    build_problem,
    load_config,
    read_summary,
    resolve_out_dir,
    run_experiment,
)
from .solver import SolverAbort

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ABORT = 0, 1, 2, 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    paths = run_experiment(cfg, out_dir=args.out, workers=args.workers)
    out = resolve_out_dir(cfg, args.out)
    rows = read_summary(f"{out}/summary.csv")
    print(f"{'solver':<6} {'q':>4} {'seed':>5} {'f - f*':>12} {'||grad f||':>12}")
    for r in rows:
        print(f"{r['solver']:<6} {int(r['q']):>4} {int(r['seed']):>5} "
              f"{float(r['final_gap']):>12.4e} {float(r['final_gnorm']):>12.4e}")
    print(f"wrote {len(paths)} traces and summary.csv to {out}")
    return EXIT_OK


def _cmd_average(args) -> int:
    paths = sorted(glob.glob(args.glob))
    if not paths:
        print(f"error: no files match {args.glob!r}", file=sys.stderr)
        return EXIT_DATA
    avg = average_traces(paths, args.out)
    print(f"averaged {len(paths)} traces ({len(avg)} rows) into {args.out}")
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = load_config(args.config)
    dims = set()
    for seed in cfg.seeds:
        problem = build_problem(cfg, seed)
        dims.add(problem.n)
        if max(cfg.block_sizes) > problem.n:
            raise ConfigError(f"experiment.block_sizes: {max(cfg.block_sizes)} exceeds the problem dimension "
                              f"{problem.n}")
    n_runs = len(cfg.solvers) * len(cfg.block_sizes) * len(cfg.seeds)
    print(f"config ok: {cfg.problem['type']} (n={', '.join(map(str, sorted(dims)))}), "
          f"{n_runs} runs of {cfg.max_iters} iterations")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ibcn", description="Block cubic Newton experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (solver, q, seed) of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("average", help="average traces row by row")
    p.add_argument("--glob", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_average)

    p = sub.add_parser("check", help="validate a config and load its data without running")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
