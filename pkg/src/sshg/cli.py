"""Command-line entry points.

    sshg solve --config cfg.json [--seed N] [--threads N] [--out DIR]
    solve --config cfg.json ...              (same command, direct alias)

Exit codes: 0 success, 2 config error, 3 capacity/resolution error,
4 non-convergence (the flagged output is still written).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import (
    CapacityError,
    ConfigError,
    ResolutionError,
    SpectralGapError,
    SSHGError,
)
from .runner import RunConfig, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_NONCONVERGED = 4


def _solve_parser(prog: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=prog, description="Run a solver pipeline")
    p.add_argument("--config", action="append", required=True,
                   help="path to a flat JSON config (repeat for a batch)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (falls back to SSHG_THREADS; "
                        "the solver itself is sequential)")
    p.add_argument("--out", type=str, default=None, help="override output_dir")
    p.add_argument("--workers", type=int, default=1,
                   help="process count for batch configs (one run per process)")
    return p


def _load_config(path: str, args) -> RunConfig:
    config = RunConfig.from_file(path)
    if args.seed is not None:
        config.raw["seed"] = int(args.seed)
    if args.out is not None:
        config.raw["output_dir"] = args.out
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SSHG_THREADS", "1"))
    config.raw["threads"] = int(threads)
    return config


def _execute(config: RunConfig) -> int:
    output = run(config)
    return EXIT_OK if output.get("converged", True) else EXIT_NONCONVERGED


def _run_one(path_and_args) -> int:
    path, args = path_and_args
    try:
        return _execute(_load_config(path, args))
    except (ConfigError, SpectralGapError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapacityError, ResolutionError) as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except SSHGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def run_solve(argv, prog="sshg solve") -> int:
    args = _solve_parser(prog).parse_args(argv)
    jobs = [(path, args) for path in args.config]
    if len(jobs) > 1 and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            codes = list(pool.map(_run_one, jobs))
    else:
        codes = [_run_one(job) for job in jobs]
    return max(codes)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = argparse.ArgumentParser(prog="sshg", add_help=True)
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("solve", add_help=False)
    try:
        known, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if known.command != "solve":
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    return run_solve(rest)


def main_solve(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    return run_solve(argv, prog="solve")


if __name__ == "__main__":
    sys.exit(main())
