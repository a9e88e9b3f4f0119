"""
Command line entry point `effect-ci`.

    effect-ci ci --data samples.csv --i 1 --j 2 [--method slrt] [--format text]
    effect-ci simulate --d 6 --n 500 --beta 0.5 --reps 200 --methods lrt,bootstrap --out-dir results/

Node labels are 1-based here and 0-based in the library.
"""

import argparse
import logging
import sys
from typing import List, Optional

from data import load_dataset
import database
from effect_tests import DEFAULT_MAX_STEPS, TestConfig
from errors import DegenerateDataError, EffectCIError, InvalidModelError, ScanOverflowError
from region import confidence_region
from sim import SIM_METHODS, ExperimentSpec, run_experiment, write_results
from utils import format_region_text, region_to_json, resolve_threads

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_SCAN_OVERFLOW = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    """Argument value rejected after parsing."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on its own errors already; keep that code for ours too
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _probability(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="effect-ci", description=
                     "Confidence regions for total causal effects in equal-variance Gaussian "
                     "linear structural equation models")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only, no progress bar")
    threads_help = "worker count (default: $EFFECT_CI_THREADS, else all CPUs)"
    parser.add_argument("--threads", type=_positive_int, default=None, help=threads_help)
    # accepted after the subcommand too; SUPPRESS keeps a top-level value from being reset
    shared = _Parser(add_help=False)
    shared.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS, help=threads_help)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ci = sub.add_parser("ci", parents=[shared], help="confidence region for C(i -> j) from a data file")
    ci.add_argument("--data", required=True, help="delimited numeric table, optional header row")
    ci.add_argument("--i", dest="i", type=int, required=True, help="1-based column of the intervened variable")
    ci.add_argument("--j", dest="j", type=int, required=True, help="1-based column of the response variable")
    ci.add_argument("--alpha", type=_probability, default=0.05)
    ci.add_argument("--step", type=_positive_float, default=None, help="scan step (default: automatic)")
    ci.add_argument("--method", choices=("lrt", "slrt"), default="lrt")
    ci.add_argument("--split-ratio", type=_probability, default=0.5)
    ci.add_argument("--seed", type=int, default=0)
    ci.add_argument("--max-steps", type=_positive_int, default=DEFAULT_MAX_STEPS)
    ci.add_argument("--out", default="-", help="output file, '-' for standard output")
    ci.add_argument("--format", choices=("json", "text"), default="json")
    ci.set_defaults(handler=cmd_ci)

    simulate = sub.add_parser("simulate", parents=[shared], help="coverage experiment on random DAGs")
    simulate.add_argument("--d", type=int, default=6)
    simulate.add_argument("--n", type=int, default=500)
    simulate.add_argument("--beta", type=float, default=0.5)
    simulate.add_argument("--density", choices=("sparse", "dense"), default="sparse")
    simulate.add_argument("--reps", type=_positive_int, default=200)
    simulate.add_argument("--alpha", type=_probability, default=0.05)
    simulate.add_argument("--methods", default="lrt", help=f"comma separated subset of {','.join(SIM_METHODS)}")
    simulate.add_argument("--no-effect", action="store_true", help="force C(1 -> 2) = 0")
    simulate.add_argument("--variance-spread", type=float, default=0.0)
    simulate.add_argument("--bootstrap-reps", type=_positive_int, default=500)
    simulate.add_argument("--split-ratio", type=_probability, default=0.5)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out-dir", default=None, help="directory for the result tables")
    simulate.add_argument("--db", default=None, help="SQLAlchemy URL to store the run (default: $DATABASE_URL)")
    simulate.set_defaults(handler=cmd_simulate)
    return parser


def _node(label: int, d: int, flag: str) -> int:
    if not 1 <= label <= d:
        raise UsageError(f"{flag} must lie in 1..{d}, got {label}")
    return label - 1


def cmd_ci(args) -> int:
    if args.i == args.j:
        raise UsageError("--i and --j must name different variables")
    data = load_dataset(args.data)
    i = _node(args.i, data.d, "--i")
    j = _node(args.j, data.d, "--j")
    cfg = TestConfig(
        alpha=args.alpha,
        method=args.method,
        split_ratio=args.split_ratio,
        step=args.step,
        seed=args.seed,
        max_steps=args.max_steps,
        workers=resolve_threads(args.threads),
    )
    region = confidence_region(data, i, j, cfg)
    if args.format == "json":
        text = region_to_json(region, {"i": args.i, "j": args.j})
    else:
        text = format_region_text(region, args.i, args.j)
    if args.out == "-":
        print(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        logger.info("region written to %s", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    methods = tuple(m.strip().lower() for m in args.methods.split(",") if m.strip())
    spec = ExperimentSpec(
        d=args.d,
        n=args.n,
        beta_mean=args.beta,
        density=args.density,
        reps=args.reps,
        alpha=args.alpha,
        methods=methods,
        effect_mode="no_effect" if args.no_effect else "true_effect",
        variance_spread=args.variance_spread,
        seed=args.seed,
        bootstrap_reps=args.bootstrap_reps,
        split_ratio=args.split_ratio,
    )
    result = run_experiment(spec, workers=resolve_threads(args.threads), progress=not args.quiet)
    if args.out_dir:
        write_results(result, args.out_dir)
    db_url = args.db or database.DATABASE_URL
    if db_url:
        database.save_experiment(result, db_url)
    print(f"{'method':<10} {'d':>3} {'n':>6} {'beta':>6} {'density':<7} {'coverage':>8} "
          f"{'width':>8} {'zero':>6} {'ms':>10}")
    for item in result.summaries:
        print(f"{item.method:<10} {spec.d:>3} {spec.n:>6} {spec.beta_mean:>6.3g} {spec.density:<7} "
              f"{item.coverage:>8.3f} {item.mean_width:>8.4f} {item.zero_inclusion:>6.3f} {item.mean_wall_ms:>10.1f}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    try:
        return args.handler(args)
    except ScanOverflowError as e:
        print(f"effect-ci: {e}", file=sys.stderr)
        return EXIT_SCAN_OVERFLOW
    except (UsageError, ValueError, DegenerateDataError, InvalidModelError, OSError) as e:
        print(f"effect-ci: {e}", file=sys.stderr)
        return EXIT_USAGE
    except EffectCIError as e:
        print(f"effect-ci: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
