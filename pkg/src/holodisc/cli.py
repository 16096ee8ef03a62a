"""Command line: ``holodisc run FILE`` and ``holodisc sweep FILE --levels 0,1,2``.

Exit status: 0 when every run ends with a definite existence verdict, 2 when
a verdict is inconclusive, 1 on any error.
"""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .errors import StageError


def _levels(text):
    text = text.strip()
    if not text:
        return []
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holodisc",
                                     description="Minimize holomorphic polygons and compute partial Maslov indices.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for randomized initializers")
    common.add_argument("--threads", type=int, default=1,
                        help="thread count to record in the run (stages run single-threaded)")
    common.add_argument("--out", default="holodisc-out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[common], help="run one scenario at one mesh level")
    p_run.add_argument("file")
    p_run.add_argument("--level", type=int, default=None)
    p_sweep = sub.add_parser("sweep", parents=[common], help="run a scenario at several mesh levels")
    p_sweep.add_argument("file")
    p_sweep.add_argument("--levels", type=_levels, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            rec = pipeline.run(args.file, args.out, args.level, args.seed, args.threads)
            sys.stdout.write(pipeline.report_text(rec))
            return rec.exit_code
        records = pipeline.sweep(args.file, args.levels, args.out, args.seed, args.threads)
        for rec in records:
            sys.stdout.write(pipeline.report_text(rec) + "\n")
        return pipeline.sweep_exit_code(records)
    except StageError as exc:
        print(f"holodisc: {exc}", file=sys.stderr)
        return pipeline.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
