"""Command-line entry point: ``nvmagnon simulate <config.toml>``."""
from __future__ import annotations

import argparse
import sys
import warnings

from .config import load_config
from .errors import ConfigError, NVMagnonError, SolverError, TruncationLeakageError
from .scenarios import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_LEAKAGE = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nvmagnon", description="NV-magnon-magnon scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run a scenario config and write CSV")
    sim.add_argument("config", help="TOML scenario file")
    sim.add_argument("--out", help="output CSV path (overrides the config's output key)")
    sim.add_argument("--threads", type=int, help="worker threads (default: $NVMAGNON_THREADS or CPU count)")
    sim.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                     help="dotted config key with a TOML value, e.g. params.xi=2; repeatable")
    sim.add_argument("--json", action="store_true", help="also write a JSON mirror")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table = run_scenario(cfg, threads=args.threads)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        out = args.out or cfg.output
        if out:
            for path in table.write(out, json_mirror=args.json or cfg.json):
                print(f"wrote {path}", file=sys.stderr)
        else:
            sys.stdout.write(table.to_json() if args.json or cfg.json else table.to_csv())
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except TruncationLeakageError as exc:
        print(f"truncation leakage: {exc}", file=sys.stderr)
        return EXIT_LEAKAGE
    except (SolverError, NVMagnonError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
