"""``plate-eig`` command line.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import InvalidArgumentError, PlateEigError, UnsupportedCombinationError
from .study import StudyConfig, emit_csv, emit_plotdata, run_study, summary_table

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plate-eig", description="Clamped plate eigenvalue studies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per level")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    st = sub.add_parser("study", help="run a convergence study over nested meshes")
    st.add_argument("--domain", choices=["square", "lshape"], default="square")
    st.add_argument("--triple", choices=["A", "B"], default="B",
                    help="A: P2-P2-P0, B: P2-P2-P1")
    st.add_argument("--method", choices=["single", "multi"], default="single")
    st.add_argument("--levels", type=int, default=5, help="number of refinements N")
    st.add_argument("--num-eigs", type=int, default=6, dest="k")
    st.add_argument("--n0", type=int, default=4, help="cells per unit length on level 0")
    st.add_argument("--pattern", choices=["crisscross", "diagonal"], default="crisscross")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", default="results", help="output directory")
    st.add_argument("--timing", action="store_true",
                    help="fill the seconds column (makes reruns differ)")
    return parser


def _stem(cfg: StudyConfig) -> str:
    return f"{cfg.domain}_{cfg.triple}_{cfg.method}"


def _write(result, out: Path, timing: bool):
    stem = _stem(result.config)
    emit_csv(result, out / f"{stem}.csv", timing=timing)
    status = {"status": result.status, "message": result.message,
              "seconds": [None if s != s else round(float(s), 3) for s in result.seconds],
              "dofs": [int(d) for d in result.dofs]}
    (out / f"{stem}.status.json").write_text(json.dumps(status, indent=2) + "\n")
    if result.complete and result.n_levels >= 2:
        emit_plotdata(result, out / f"{stem}.lambda.dat", "lambda")
        emit_plotdata(result, out / f"{stem}.u.dat", "u")


def cmd_study(args) -> int:
    cfg = StudyConfig(domain=args.domain, triple=args.triple, method=args.method,
                      levels=args.levels, k=args.k, n0=args.n0, out=args.out,
                      seed=args.seed, pattern=args.pattern)
    try:
        cfg.validate()
    except InvalidArgumentError as exc:
        print(f"plate-eig: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    try:
        result = run_study(cfg)
    except (InvalidArgumentError, UnsupportedCombinationError) as exc:
        print(f"plate-eig: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlateEigError as exc:
        print(f"plate-eig: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        _write(result, out, args.timing)
    except OSError as exc:
        print(f"plate-eig: cannot write results: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not result.complete:
        print(f"plate-eig: numerical failure: {result.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(summary_table(result))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "study":
        return cmd_study(args)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
