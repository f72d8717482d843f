"""Command line entry point: ``thinobs run | list | accept``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .runner import EXIT_CONFIG, EXIT_SOLVER, run_experiment
from .scenarios import list_scenarios
from .solver import SolverError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinobs", description="Thin obstacle problem experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a configured scenario and write artifacts")
    run.add_argument("--config", required=True, metavar="PATH")
    run.add_argument("--out", metavar="DIR", help="override [experiment] output")

    ls = sub.add_parser("list", help="print the scenario registry")
    ls.add_argument("--verbose", action="store_true", dest="details", help="show expected exponents")
    ls.add_argument("filter", nargs="?", default="", help="substring filter on names")

    acc = sub.add_parser("accept", help="run the acceptance criteria")
    acc.add_argument("--only", metavar="TAG", help="criterion id or tag, comma separated")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list":
        for line in list_scenarios(args.filter, args.details):
            print(line)
        return 0

    if args.command == "accept":
        from .acceptance import run_acceptance

        try:
            return run_acceptance(args.only)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_experiment(cfg, args.out)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
