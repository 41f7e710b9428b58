"""``dynamo alpha|bloch|schedule|simulate|verify --config <path> [--out <dir>] [--seed <u64>]``"""
from __future__ import annotations

import argparse
import logging
import sys

from . import runner
from .config import ConfigError, RunConfig, parse_config, with_overrides

COMMANDS = {
    "alpha": runner.cmd_alpha,
    "bloch": runner.cmd_bloch,
    "schedule": runner.cmd_schedule,
    "simulate": runner.cmd_simulate,
    "verify": runner.cmd_verify,
}


def _seed(s: str) -> int:
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynamo", description="Alpha-effect dynamo experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration (verify runs without one)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=_seed)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            if args.command != "verify":
                print(f"dynamo {args.command}: --config is required", file=sys.stderr)
                return 2
            cfg = RunConfig()
        else:
            cfg = parse_config(args.config)
        cfg = with_overrides(cfg, out=args.out, seed=args.seed)
        summary = COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"dynamo: config error ({type(e).__name__}): {e}", file=sys.stderr)
        return 2
    except runner.ScheduleError as e:
        print(f"dynamo: {e}", file=sys.stderr)
        return 3
    failed = [k for k, r in summary.get("checks", {}).items() if not r["pass"]]
    for k in failed:
        print(f"FAIL {k}: {summary['checks'][k]}", file=sys.stderr)
    print(f"dynamo {args.command}: {'pass' if not failed else f'{len(failed)} check(s) failed'}"
          f" -> {cfg.out}/summary.json")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
