"""Command line entry point: ``blocknorm-omd run`` and ``blocknorm-omd verify``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, load, validate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blocknorm-omd",
                                 description="Online mirror descent with block-norm mirror maps.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a YAML config")
    run.add_argument("--experiment", choices=EXPERIMENTS, help="experiment id (overrides config)")
    run.add_argument("--config", help="YAML config file")
    run.add_argument("--seed", type=int, help="master seed (overrides config master_seed)")
    run.add_argument("--out", help="output directory (overrides config out)")
    run.add_argument("--workers", type=int, help="worker processes (overrides config)")
    run.add_argument("--strict", action="store_true",
                     help="also exit 1 when a pass/fail check fails")

    ver = sub.add_parser("verify", help="run invariant suites as a pass/fail report")
    ver.add_argument("--suite", default="all", help="suite name or 'all'")
    ver.add_argument("--seed", type=int, default=0)
    return ap


def _cmd_run(args) -> int:
    from .runner import run_experiment, summary_lines

    try:
        raw = load(args.config) if args.config else {}
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a mapping")
        if args.experiment is not None:
            raw["experiment"] = args.experiment
        if args.seed is not None:
            raw["master_seed"] = args.seed
        if args.out is not None:
            raw["out"] = args.out
        if args.workers is not None:
            raw["workers"] = args.workers
        cfg = validate(raw)
        if cfg["out"] is None:
            raise ConfigError("an output directory is required (--out or 'out' in the config)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run_experiment(cfg)
    print("\n".join(summary_lines(result)))
    print(f"artifacts written to {result.out}")
    if result.failures:
        for f in result.failures:
            print(f"numerical failure in cell {f['cell']} seed {f['seed']}: {f['error']}", file=sys.stderr)
        return EXIT_FAIL
    if args.strict and not all(c.passed for c in result.checks):
        return EXIT_FAIL
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_suite

    try:
        checks = run_suite(args.suite, args.seed)
    except KeyError as exc:
        print(f"config error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed} passed, {failed} failed")
    return EXIT_FAIL if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
