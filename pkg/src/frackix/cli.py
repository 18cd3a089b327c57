"""Command line: ``frackix <subcommand> --config FILE [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import SUBCOMMANDS, RunConfig, load_config, parse_config
from .errors import FrackixError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frackix", description=(
        "Fractional chemotaxis laboratory: kinetic Monte Carlo, macroscopic "
        "solver and half-space layer diagnostics."))
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dump-operator", action="store_true",
                       help="also write the fractional operator matrix as CSV")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out": args.out}
    if args.dump_operator:
        overrides["dump_operator"] = True
    try:
        if args.config:
            cfg = load_config(args.config, args.subcommand, overrides)
        else:
            cfg = parse_config("{}", args.subcommand, overrides)
        from .pipelines import run

        summary = run(cfg)
    except FrackixError as exc:
        report = {"status": "error", "category": exc.category, "message": str(exc)}
        print(json.dumps(report), file=sys.stderr)
        return EXIT_CONFIG if exc.category in ("configuration", "validation") else EXIT_RUNTIME
    print(json.dumps({"status": "ok", "subcommand": cfg.subcommand, "out": cfg.out,
                      "summary": _short(summary)}, default=str))
    return EXIT_OK


def _short(summary):
    if not isinstance(summary, dict):
        return summary
    return {k: v for k, v in summary.items() if not isinstance(v, (list, dict))}


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
