"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure (or a
failed ``verify`` check).
"""

import argparse
import json
import logging
import sys

import numpy as np

from .bench import (METHODS, PROBLEMS, BenchmarkSpec, RecordError, parse_x0, read_config,
                    run_benchmark, thread_limit, verify)
from .esl import InnerSolverError
from .nlp import QPCyclingError, QPInfeasibleError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

NUMERICAL_ERRORS = (np.linalg.LinAlgError, FloatingPointError, InnerSolverError,
                    QPInfeasibleError, QPCyclingError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="feslkit", description="Equivalent static load optimization "
                     "benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="optimize one benchmark")
    run.add_argument("--config", help="flat key=value file; flags override it")
    run.add_argument("--problem", choices=PROBLEMS)
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--x0", type=parse_x0, help="comma-separated start design")
    run.add_argument("--eps", type=float, help="outer stopping tolerance")
    run.add_argument("--constraint-tol", type=float)
    run.add_argument("--max-iter", type=int, help="inner solver iteration limit")
    run.add_argument("--max-outer", type=int)
    run.add_argument("--record", help="ground-motion CSV for p2 (time, acceleration)")
    run.add_argument("--out", help="directory for report.json and CSV series")

    ver = sub.add_parser("verify", help="run gradient and identity checks")
    ver.add_argument("--problem", choices=PROBLEMS, action="append",
                     help="repeatable; default all")
    return parser


def _spec_from_args(args):
    values = read_config(args.config) if args.config else {}
    for key in ("problem", "method", "x0", "eps", "constraint_tol", "max_iter",
                "max_outer", "record", "out"):
        value = getattr(args, key)
        if value is not None:
            values[key] = value
    if "problem" not in values:
        raise ValueError("--problem is required (flag or config)")
    return BenchmarkSpec(**values)


def _run(args):
    try:
        spec = _spec_from_args(args)
        if spec.x0 is not None:
            n = {"p1": 2, "p2": 2, "p3": 7}[spec.problem]
            if len(spec.x0) != n:
                raise ValueError(f"--x0 needs {n} values for {spec.problem}")
    except (ValueError, TypeError, OSError) as exc:
        print(f"feslkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        report = run_benchmark(spec)
    except (RecordError, OSError) as exc:
        print(f"feslkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"feslkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(report.to_json())
    return EXIT_OK if report.status == "converged" else EXIT_NUMERICAL


def _verify(args):
    try:
        workers = thread_limit()
    except ValueError as exc:
        print(f"feslkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    results = verify(tuple(args.problem) if args.problem else PROBLEMS, workers)
    out = [{"check": r.name, "passed": r.passed, "value": r.value,
            "threshold": r.threshold, "detail": r.detail} for r in results]
    print(json.dumps({"passed": all(r.passed for r in results), "checks": out}, indent=2))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _run(args)
    return _verify(args)


if __name__ == "__main__":
    sys.exit(main())
