"""Command line entry point.

Verbs: generate (phantom dataset), run (one method over a dataset),
compare (align metrics across runs), time (per-method wall times), and
export-training (training pairs for the guess networks). Configs are JSON
files; invalid configuration exits with code 2 and a single-line reason.
"""

import argparse
import sys

from .experiment import (
    ConfigError,
    compare_methods,
    export_training,
    generate_dataset,
    run_experiment,
    time_methods,
)


def _add_common(parser):
    parser.add_argument("--config", required=True, metavar="<path>",
                        help="JSON experiment config")
    parser.add_argument("--out", required=True, metavar="<dir>",
                        help="output directory")
    parser.add_argument("--seed", type=int, default=None, metavar="<int>",
                        help="override the dataset and noise seeds")
    parser.add_argument("--workers", type=int, default=None, metavar="<int>",
                        help="image-level worker count")
    parser.add_argument("--identity-guess", action="store_true",
                        help="swap inc_dg guesses for the identity operator")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="inctpv",
        description="Total-p-Variation solvers for deblurring and fan-beam CT.")
    sub = parser.add_subparsers(dest="verb", required=True)

    _add_common(sub.add_parser(
        "generate", help="write a phantom dataset with a manifest"))
    _add_common(sub.add_parser(
        "run", help="run one method over a dataset and report metrics"))
    compare = sub.add_parser(
        "compare", help="align metrics across runs of one dataset")
    compare.add_argument("runs", nargs="+", metavar="<run-dir>",
                         help="run directories to compare")
    compare.add_argument("--out", required=True, metavar="<dir>",
                         help="output directory")
    _add_common(sub.add_parser(
        "time", help="time each configured method on the same images"))
    _add_common(sub.add_parser(
        "export-training", help="export training pairs from an incremental run"))

    args = parser.parse_args(argv)
    try:
        if args.verb == "generate":
            print(generate_dataset(args.config, args.out, seed=args.seed))
        elif args.verb == "run":
            print(run_experiment(args.config, args.out, seed=args.seed,
                                 workers=args.workers,
                                 identity_guess=args.identity_guess))
        elif args.verb == "compare":
            print(compare_methods(args.runs, args.out))
        elif args.verb == "time":
            print(time_methods(args.config, args.out, seed=args.seed,
                               workers=args.workers,
                               identity_guess=args.identity_guess))
        else:
            print(export_training(args.config, args.out, seed=args.seed,
                                  workers=args.workers))
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
