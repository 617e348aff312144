"""
Command line
============

::

    eqsel run --config treasure_fig1 --out results/fig1
    eqsel analyze --config treasure_analyze --out results/analysis
    eqsel list
    eqsel validate --config my_game.yaml

``--config`` takes a path or the name of a bundled document. Exit codes
are 0 on success, 1 on configuration, validation or analysis errors and 2
on usage errors.
"""

import argparse
import logging
import sys

import pydantic
import yaml

from . import __version__
from .config import ExperimentConfig
from .exceptions import EqselError
from .experiments import (
    cmd_analyze,
    cmd_list,
    cmd_run,
    cmd_validate,
    resolve_config_path,
)
from .rules import RULES

logger = logging.getLogger("eqsel")

FORMATS = {
    "csv": ["csv", "summary"],
    "svg": ["svg", "summary"],
    "both": ["csv", "svg", "summary"],
    "zarr": ["zarr", "summary"],
}


def _epsilons(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated numbers, got '{text}'"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("no epsilon given")
    return values[0] if len(values) == 1 else values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqsel",
        description="Equilibrium selection in finite-horizon stochastic "
        "games: actor-critic runs and exact stochastic stability analysis.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument(
        "-v", "--verbose", action="store_true", help="debug logging"
    )
    verbosity.add_argument(
        "-q", "--quiet", action="store_true", help="warnings and errors only"
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    def experiment_verb(name, help_text):
        sub = verbs.add_parser(name, help=help_text)
        sub.add_argument(
            "--config", required=True, help="config path or bundled name"
        )
        sub.add_argument("--out", required=True, help="output directory")
        sub.add_argument("--seed", type=int)
        sub.add_argument("--runs", type=int, dest="n_runs")
        sub.add_argument("--epsilon", type=_epsilons)
        sub.add_argument("--iters", type=int, dest="iterations")
        sub.add_argument("--rule", choices=RULES)
        sub.add_argument("--algorithm", choices=("exact", "sampled"))
        sub.add_argument("--format", choices=tuple(FORMATS), dest="fmt")
        return sub

    experiment_verb("run", "execute seeded framework runs")
    experiment_verb("analyze", "exact stationary and stability analysis")
    verbs.add_parser("list", help="built-in games, rules and bundled configs")
    validate = verbs.add_parser("validate", help="check a config document")
    validate.add_argument(
        "--config", required=True, help="config path or bundled name"
    )
    return parser


def _load_experiment(args):
    path = resolve_config_path(args.config)
    config = ExperimentConfig.from_yaml(path)
    config = config.with_overrides(
        seed=args.seed,
        n_runs=args.n_runs,
        epsilon=args.epsilon,
        iterations=args.iterations,
        rule=args.rule,
        algorithm=args.algorithm,
        outputs=FORMATS[args.fmt] if args.fmt else None,
    )
    return config, path.parent


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (
        logging.DEBUG
        if args.verbose
        else logging.WARNING if args.quiet else logging.INFO
    )
    logging.basicConfig(
        level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s"
    )
    try:
        if args.verb == "run":
            config, base = _load_experiment(args)
            cmd_run(config, args.out, base)
        elif args.verb == "analyze":
            config, base = _load_experiment(args)
            cmd_analyze(config, args.out, base)
        elif args.verb == "list":
            yaml.safe_dump(cmd_list(), sys.stdout, sort_keys=False)
        else:
            problems = cmd_validate(args.config)
            for problem in problems:
                print(problem)
            if problems:
                logger.error(
                    f"{args.config}: {len(problems)} invalid game value(s)"
                )
                return 1
            print(f"{args.config}: ok")
    except pydantic.ValidationError as err:
        logger.error(f"{args.config}: invalid document\n{err}")
        return 1
    except (EqselError, ValueError, OSError) as err:
        logger.error(f"{type(err).__name__}: {err}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
