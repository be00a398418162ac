"""
Command-line entry point.

    collapselab <evolve|bohm|grw|decohere|measure> [--config PATH] [--seed N]
                [--out DIR] [--workers N] [--format csv|json] [--no-figures]
    collapselab schema            # print the configuration JSON schema

Exit status: 0 success, 2 configuration error, 3 runtime/physics error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import SUBCOMMANDS, ConfigError, config_schema, parse_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("collapselab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collapselab", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=f"run a {name} scenario")
        s.add_argument("--config", help="JSON scenario file (or inline JSON text)")
        s.add_argument("--seed", type=int, help="64-bit master seed (overrides config)")
        s.add_argument("--out", help="output directory (overrides config)")
        s.add_argument("--workers", type=int, help="worker processes (overrides config)")
        s.add_argument("--format", choices=["csv", "json"], help="table format (overrides config)")
        s.add_argument("--no-figures", action="store_true", help="skip PNG figures")
        s.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("schema", help="print the configuration JSON schema")
    return p


def _summary_line(summary: dict, seed: int, wall: float) -> str:
    key = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                   for k, v in summary.get("key_statistic", {}).items())
    return f"{summary['scenario']} seed={seed} wall={wall:.2f}s {key}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2, sort_keys=True))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config if args.config else "{}", subcommand=args.command)
        cfg = cfg.with_overrides(**{
            "seed": args.seed,
            "workers": args.workers,
            "output.dir": args.out,
            "output.format": args.format,
            "output.figures": False if args.no_figures else None,
        })
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .scenarios import run_scenario
    try:
        summary, wall = run_scenario(cfg)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        log.debug("scenario failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(_summary_line(summary, cfg.seed, wall))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
