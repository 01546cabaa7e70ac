"""Command-line entry point: ``invlab <subcommand> --config <path>``."""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

from . import __version__
from .config import SEED_ENV, ConfigError, load_config
from .experiments import RUNNERS, Context
from .model import DomainError, ParameterError
from .outputs import emit_outputs

EXIT_OK, EXIT_INVALID, EXIT_CHECKS, EXIT_INTERNAL = 0, 1, 2, 3

EPILOG = f"""\
subcommands:
  solve     dynamic program; writes policy.txt and structure_report.json
  simulate  R cost samples under run.policy_a; costs.csv, trajectories/
  diagnose  martingale, Dobrushin, variance, CLT, Hoeffding and dominance checks
  clt       horizon sweep with KS per horizon, variance fit and plot data
  compare   run.policy_a against run.policy_b on common random numbers
  report    solve + simulate + diagnose plus summary.json

config defaults: demand.M = max(64, ceil(512 J)), run.h = J/256, run.n = 50,
run.horizons = [25, 50, 100, 200], run.R = 10000, run.retain = 5,
run.policy_a = "optimal", run.policy_b = "never_order",
run.hoeffding_multipliers = [0.5, 1, 2], run.probes = 20,
output.directory = "out" (relative to the config file), output.formats = ["json", "csv"].
{SEED_ENV} overrides run.master_seed.

exit codes: 0 ok, 1 invalid config or input, 2 a check reported FAIL, 3 internal error.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="invlab", description="Inventory control laboratory with random delivery delays.",
                     epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"invlab {__version__}")
    parser.add_argument("subcommand", choices=sorted(RUNNERS))
    parser.add_argument("--config", required=True, type=Path, help="TOML experiment config")
    parser.add_argument("--workers", type=int, default=1, help="simulation threads (default 1)")
    parser.add_argument("--out", type=Path, default=None, help="output directory (overrides output.directory)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("invlab: error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"invlab: config error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = args.out if args.out is not None else cfg.output.directory
    try:
        art = RUNNERS[args.subcommand](Context(cfg, args.workers))
        meta = {
            "subcommand": args.subcommand,
            "config_sha256": hashlib.sha256(args.config.read_bytes()).hexdigest(),
            "master_seed": cfg.run.master_seed,
            "checks": art.checks,
            "passed": art.passed,
        }
        emit_outputs(art.files, out_dir, meta)
    except (ParameterError, DomainError, ValueError) as exc:
        print(f"invlab: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"invlab: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        logging.exception("internal error")
        print(f"invlab: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    for name, ok in art.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"wrote {len(art.files)} files to {out_dir}")
    return EXIT_OK if art.passed else EXIT_CHECKS


if __name__ == "__main__":
    sys.exit(main())
