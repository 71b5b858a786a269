"""Command line entry point: ``stpopt {run,report,validate,list}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import harness
from .errors import ConfigurationError
from .problems import SUITE_NAMES, suite_load, suite_manifest

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3



def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stpopt", description="Derivative-free three-point methods and benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment matrix and write profiles")
    run.add_argument("--plan", help="flat key=value plan file")
    run.add_argument("--suite", choices=SUITE_NAMES)
    run.add_argument("--method", action="append", help="method string, repeatable")
    run.add_argument("--eps", action="append", help="target tolerance, repeatable")
    run.add_argument("--seeds", help="replicates per (problem, method)")
    run.add_argument("--max-evals", dest="max_evals", help="evaluation budget per run (default 100000)")
    run.add_argument("--master-seed", dest="master_seed")
    run.add_argument("--out", help="output directory")

    rep = sub.add_parser("report", help="rebuild profiles from a saved records.csv")
    rep.add_argument("--out", required=True, help="directory holding records.csv")
    rep.add_argument("--records", help="records CSV (default <out>/records.csv)")

    val = sub.add_parser("validate", help="Monte-Carlo check of the direction-law constants")
    val.add_argument("--dims", default="2,3,10,50", help="comma-separated dimensions")
    val.add_argument("--laws", default="sphere,gaussian,coord_uniform,coord_weighted,ortho_basis")
    val.add_argument("--samples", type=int, default=200_000)
    val.add_argument("--master-seed", dest="master_seed", type=int, default=0)

    lst = sub.add_parser("list", help="print a suite manifest as CSV")
    lst.add_argument("--suite", choices=SUITE_NAMES, default="all")
    return parser


def _split(text, convert):
    return [convert(x) for x in text.split(",") if x.strip()]


def _cmd_run(args) -> int:
    plan = harness.parse_plan(args)
    result = harness.run_matrix(plan)
    for problem, method, reason in result.skipped:
        print(f"skipped {method} on {problem}: {reason}", file=sys.stderr)
    print(harness.report(result.records, plan.out_dir), end="")
    return EXIT_OK


def _cmd_report(args) -> int:
    path = args.records or os.path.join(args.out, "records.csv")
    print(harness.report(harness.load_records(path), args.out), end="")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        dims = _split(args.dims, int)
    except ValueError:
        raise ConfigurationError(f"dims: {args.dims!r} is not a list of integers", key="dims") from None
    if not dims or min(dims) < 1:
        raise ConfigurationError("dims must be positive integers", key="dims")
    rows = harness.validate_assumptions(dims, _split(args.laws, str.strip), args.samples, args.master_seed)
    print(harness.validation_table(rows), end="")
    return EXIT_OK if all(r.passed for r in rows) else 1


def _cmd_list(args) -> int:
    print(suite_manifest(suite_load(args.suite)), end="")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "report": _cmd_report, "validate": _cmd_validate, "list": _cmd_list}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
