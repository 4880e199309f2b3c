"""Command line: ``subnoether demo|check|list``.

Exit status is 0 when every check passes or is skipped, 1 when a check
fails, and 2 for input errors (unknown case, parse or semantic errors).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .catalog import CASES, SKIPPED, Report, UnknownCase, run_case, run_document
from .dsl import ParseError, SemanticError, parse_document

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


def _seed_default() -> int:
    raw = os.environ.get("SUBNOETHER_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        return 0


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--seed", type=int, default=None, help="oracle seed (default: $SUBNOETHER_SEED or 0)")
    p.add_argument("--oracle-points", type=int, default=20, metavar="N", help="random points per check")
    p.add_argument("--verbose", action="store_true", help="show certificates and residuals for passing checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subnoether", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    demo = sub.add_parser("demo", help="run a catalog case")
    demo.add_argument("case")
    _common(demo)
    check = sub.add_parser("check", help="run the checks of a .pde file")
    check.add_argument("file", type=Path)
    _common(check)
    sub.add_parser("list", help="list catalog cases")
    return parser


def _emit(report: Report, args) -> int:
    print(report.to_json() if args.json else report.to_text(args.verbose))
    return EXIT_OK if report.ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        for name, desc in CASES.items():
            print(f"{name:26} {desc}")
        for name, why in SKIPPED.items():
            print(f"{name:26} (skipped) {why}")
        return EXIT_OK
    seed = _seed_default() if args.seed is None else args.seed
    if args.oracle_points < 0:
        print("error: --oracle-points must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "demo":
        try:
            report = run_case(args.case, seed, args.oracle_points)
        except UnknownCase:
            known = ", ".join([*CASES, *SKIPPED])
            print(f"error: unknown case {args.case!r} (known: {known})", file=sys.stderr)
            return EXIT_INPUT
        return _emit(report, args)
    try:
        text = args.file.read_text()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    try:
        doc = parse_document(text)
    except (ParseError, SemanticError) as e:
        print(f"{args.file}:{e}", file=sys.stderr)
        return EXIT_INPUT
    return _emit(run_document(doc, args.file.stem, seed, args.oracle_points), args)


if __name__ == "__main__":
    sys.exit(main())
