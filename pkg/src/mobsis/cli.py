"""Command-line entry point: ``mobsis <command> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import COMMANDS, ConfigError, ExperimentConfig
from .integrator import IntegrationError
from .model import ParameterError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobsis", description="SIS epidemics on a mobile/fast community network.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    parser.add_argument("--out", help="output directory for CSV artifacts")
    parser.add_argument("--seed", type=int, help="override sim.seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for ensembles")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _summary(command: str, result: dict) -> dict:
    """JSON-friendly scalars from a command result."""
    out = {}
    for key, val in result.items():
        if isinstance(val, (int, float, str, bool)) or val is None:
            out[key] = val
        elif isinstance(val, dict) and all(isinstance(v, (int, float)) for v in val.values()):
            out[key] = val
    if command == "optimize":
        out["J"] = result["cost"].total
    if command in ("convergence-n", "epsilon-scaling"):
        out["rows"] = [[float(v) for v in row] for row in result["rows"]]
    if command == "fig1":
        out["crossings_with"] = [float(c) for c in result["crossings_with"]]
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.sim.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = args.out or cfg.output
        result = COMMANDS[args.command](cfg, out=out, jobs=args.jobs)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(_summary(args.command, result), indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
