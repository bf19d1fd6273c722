"""Command line entry point: ``pwdg run <config> [overrides]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .driver import ConfigError, load_config, run_adaptive
from .solver import SolverError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwdg", description="Adaptive plane-wave DG Helmholtz solver")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an adaptive experiment")
    run.add_argument("config", help="key = value configuration file")
    run.add_argument("--out", help="output directory")
    run.add_argument("--max-iter", type=int, dest="max_iter")
    run.add_argument("--theta", type=float)
    run.add_argument("--s", type=float)
    run.add_argument("--p", type=int)
    run.add_argument("--indicator", choices=("dg", "weighted"))
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    overrides = {k: getattr(args, k) for k in ("out", "max_iter", "theta", "s", "p", "indicator")}
    try:
        config = load_config(args.config, **overrides)
    except (ConfigError, OSError) as exc:
        print(f"pwdg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = config.out or "pwdg-out"
    try:
        rows = run_adaptive(config, out)
    except SolverError as exc:
        print(f"pwdg: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    last = rows[-1]
    print(f"{len(rows)} iterations, {last.dofs} dofs, relative L2 error "
          f"{last.rel_l2_error:.3e}; results in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
