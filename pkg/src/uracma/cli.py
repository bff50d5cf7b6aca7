"""Command-line experiment driver.

    ura run --suite smd --problem 1 --dx 5 --dy 10 --seeds 20 --budget 2e6 --out runs/smd1.json

Writes the JSON report to ``--out`` (plus a CSV summary and, with ``--trace``,
one trace CSV per seed next to it) or prints it to stdout. Exit status is 0 on
completion, 2 for invalid configuration and 3 when a trial hit an evaluation or
numerical error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigurationError, EvaluationError, NumericalError
from .harness import Ablation, RunConfig, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _budget(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value != int(value) or value <= 0:
        raise argparse.ArgumentTypeError(f"budget must be a positive integer, got {text}")
    return int(value)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ura", description="Bilevel CMA-ES with upper-level ranking approximation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log restarts and rounds")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run seeds of one problem and report median/IQR")
    run.add_argument("--suite", choices=("smd", "wra", "synthetic"), required=True)
    run.add_argument("--problem", type=int, default=1, help="problem index within the suite")
    run.add_argument("--dx", type=int, required=True, help="upper-level dimension")
    run.add_argument("--dy", type=int, required=True, help="lower-level dimension")
    run.add_argument("--seeds", type=int, default=20, help="run seeds 0..K-1")
    run.add_argument("--budget", type=_budget, default=10_000_000, help="FEs per trial (upper + lower)")
    run.add_argument("--ablate", choices=[a.value for a in Ablation], default="none")
    run.add_argument("--conflict", type=float, default=1.0, help="coupling c of the synthetic problem")
    run.add_argument("--trace", action="store_true", help="record best-so-far trace per seed")
    run.add_argument("--out", help="JSON report path; CSV files are written beside it")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.seeds < 1:
            raise ConfigurationError("--seeds must be at least 1")
        config = RunConfig(
            suite=args.suite,
            problem=args.problem,
            d_x=args.dx,
            d_y=args.dy,
            conflict=args.conflict,
            seeds=range(args.seeds),
            budget=args.budget,
            ablation=args.ablate,
            trace=args.trace,
            out=args.out,
        )
        report = run_suite(config)
    except ConfigurationError as exc:
        print(f"ura: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvaluationError, NumericalError) as exc:
        print(f"ura: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    if args.out is None:
        print(report.to_json())
    print(report.table(), file=sys.stderr)
    failed = [t for t in report.trials if t.error]
    if failed:
        for t in failed:
            print(f"ura: seed {t.seed}: {t.error}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
