"""Command line entry point: ``hjhomog <stage> [--config PATH] [--out DIR] ...``.

Exit codes: 0 when every recorded check passes, 1 when a check fails, 2 for
a missing or malformed config, 3 when a stage raised a numerical error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import REFERENCE_NAMES, ConfigError, load, reference
from .suite import STAGES, run_verification_suite

OUT_ENV = "HJHOMOG_OUT"
SUBCOMMANDS = STAGES + ("verify", "all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hjhomog", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    src = parser.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="INI config file")
    src.add_argument("--reference", choices=REFERENCE_NAMES, help="built-in config")
    parser.add_argument("--out", type=Path, help=f"output root (default: ${OUT_ENV} or the config's directory)")
    parser.add_argument("--seed", type=int, help="override the ensemble seed")
    parser.add_argument("--dim", type=int, choices=(1, 2), help="override the dimension")
    parser.add_argument("--quiet", action="store_true", help="only print the summary line")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.config is not None:
            cfg = load(args.config)
        else:
            cfg = reference(args.reference or ("periodic1d" if args.dim != 2 else "bumps2d"))
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.dim is not None and args.dim != cfg.dimension:
            cfg = replace(cfg, ensemble=replace(cfg.ensemble, dimension=args.dim))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    root = args.out or Path(os.environ.get(OUT_ENV) or cfg.output.directory)
    stages = STAGES if args.command in ("verify", "all") else (args.command,)
    record = run_verification_suite(cfg, stages, root, export=args.command != "verify")
    record_path = record.write(root / args.command / f"{cfg.output.name}.json")
    failed = record.failed
    for stage, err in record.errors.items():
        print(f"{stage}: {err}", file=sys.stderr)
    status = {0: "PASS", 1: "FAIL", 3: "ERROR"}[record.exit_code]
    print(f"{status}: {len(record.checks) - len(failed)}/{len(record.checks)} checks passed; record {record_path}")
    if failed and not args.quiet:
        for c in failed:
            print(f"  failed {c.anchor}: measured {c.measured:.4g} > tol {c.tolerance:.4g} {c.detail}")
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
