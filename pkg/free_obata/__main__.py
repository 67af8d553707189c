"""
Main module for free_obata, an exact verification engine for free
difference quotients, free Laplacians and the rigidity of free Gibbs states
with curvature bounded below.

Scenario runs are the normal mode:

  python -m free_obata run configs/obata_standard.toml

Ad-hoc commands build a one-task scenario from flags:

  python -m free_obata spectrum -n 1 -d 3
  python -m free_obata trace "X1*X2*X1*X2" -n 2
"""
import argparse as ap
import os
import sys

from .cli import execute, setup_logging
from .scenario_schema import TASK_NAMES

ADHOC_COMMANDS = ["spectrum", "poincare", "rigidity", "cd"]


def add_common_arguments(parser: ap.ArgumentParser) -> None:
    parser.add_argument("-n", type=int, default=None, help="Number of generators")
    parser.add_argument("--model", default=None, help="JSON/TOML/YAML file with n and C or A")
    parser.add_argument("--log-level", default=None, help="Overrides FREE_OBATA_LOGLEVEL")


def add_run_arguments(parser: ap.ArgumentParser) -> None:
    parser.add_argument("--tol", type=float, default=None, help="Eigenvalue tolerance")
    parser.add_argument("--seed", type=int, default=None, help="Seed for random suites")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument(
        "--canonical",
        action="store_true",
        help="Omit the timestamp so identical runs give byte-identical reports",
    )


def parse_args(argv=None) -> ap.Namespace:
    """Parses the command-line arguments

    The scenario file for run defaults to the FREE_OBATA_SCENARIO environment
    variable.
    """
    parser = ap.ArgumentParser(prog="free-obata", formatter_class=ap.ArgumentDefaultsHelpFormatter)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help=f"Run a scenario with tasks from {TASK_NAMES}")
    run.add_argument(
        "scenario",
        nargs="?",
        default=os.getenv("FREE_OBATA_SCENARIO"),
        help="Path to a TOML, JSON or YAML scenario file",
    )
    add_run_arguments(run)
    run.add_argument("--log-level", default=None, help="Overrides the scenario's level")

    for name in ADHOC_COMMANDS:
        command = commands.add_parser(name, help=f"Run the {name} task on a single model")
        add_common_arguments(command)
        add_run_arguments(command)
        command.add_argument("-d", "--degree", type=int, default=3, help="Truncation degree")

    trace_parser = commands.add_parser("trace", help="Exact trace of a polynomial")
    trace_parser.add_argument("polynomial", help="Polynomial text, e.g. 'X1*X2*X1*X2'")
    add_common_arguments(trace_parser)

    return parser.parse_args(argv)


def main(argv=None) -> None:
    args = parse_args(argv)
    setup_logging(args.log_level or os.getenv("FREE_OBATA_LOGLEVEL", "info"))
    sys.exit(execute(args))


if __name__ == "__main__":
    main()
