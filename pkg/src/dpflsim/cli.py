"""Command-line entry point: plan, run, sweep, verify."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import RunConfig, SCHEMES, parse_config
from .errors import ConfigError, DomainError
from .runner import cmd_plan, cmd_run, cmd_sweep, parse_sweep
from .verify import format_report, report_dict, run_suites


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--scheme", choices=SCHEMES, help="override the scheme")
    p.add_argument("--out", type=Path, default=Path("runs"),
                   help="output directory (default: runs/)")


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.scheme is not None:
        over["scheme"] = args.scheme
    return dataclasses.replace(cfg, **over) if over else cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dpflsim",
        description="Federated-learning simulator with per-client "
                    "privacy-budget scheduling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="write the schedule and adherence "
                                         "report without training")
    _add_common(p_plan)

    p_run = sub.add_parser("run", help="schedule, train, and persist "
                                       "manifest/metrics/model")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a cartesian sweep document")
    p_sweep.add_argument("--config", type=Path, required=True,
                         help="JSON sweep document with base + sweep sections")
    p_sweep.add_argument("--out", type=Path, default=Path("sweeps"))
    p_sweep.add_argument("--workers", type=int, default=4)

    p_verify = sub.add_parser("verify", help="run registered oracle suites")
    p_verify.add_argument("--suite", default="all",
                          help="accounting | permutation | noise | lattice | all")
    p_verify.add_argument("--out", type=Path,
                          help="also write the report as JSON")

    args = parser.parse_args(argv)
    try:
        if args.command == "plan":
            out = cmd_plan(_load_config(args), args.out)
            print(f"plan written to {out}")
            return 0
        if args.command == "run":
            out = cmd_run(_load_config(args), args.out)
            print(f"run written to {out}")
            return 0
        if args.command == "sweep":
            base, axes = parse_sweep(args.config)
            out = cmd_sweep(base, axes, args.out, max_workers=args.workers)
            print(f"sweep written to {out}")
            return 0
        if args.command == "verify":
            try:
                results = run_suites([args.suite])
            except KeyError as e:
                print(e.args[0], file=sys.stderr)
                return 2
            print(format_report(results))
            if args.out:
                args.out.write_text(json.dumps(report_dict(results), indent=2))
            return 0 if all(r.passed for r in results) else 1
    except (ConfigError, DomainError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
