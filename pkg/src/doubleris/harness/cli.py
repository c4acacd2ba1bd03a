"""Command-line entry point: ``doubleris {fig4,fig5,fig6,fig7,fig8,custom}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import logging
import sys

from .._validation import NumericalError
from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .experiments import run_experiment
from .io import emit_results, timed

log = logging.getLogger("doubleris")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="doubleris", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="YAML file merged over the built-in defaults")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--trials", type=int, help="Monte Carlo trials per point")
        p.add_argument("--out", help="output directory (overrides outputs.directory)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = ExperimentConfig.load(
            args.experiment, args.config, {"seed": args.seed, "trials": args.trials}
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    outputs = cfg.tree["outputs"]
    out_dir = args.out or outputs["directory"]
    fmts = [args.format] if args.format else outputs["formats"]
    fmts = [fmts] if isinstance(fmts, str) else fmts
    try:
        result, wall = timed(run_experiment, cfg, args.workers)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for fmt in fmts:
        for path in emit_results(result, cfg, out_dir, fmt, wall):
            log.info("wrote %s", path)

    budget = float(cfg.tree["optimizer"]["max_unconverged_fraction"])
    if result.unconverged_fraction > budget:
        print(
            f"numerical failure: {result.ao_unconverged}/{result.ao_runs} optimizer runs did not "
            f"converge (budget {budget:.0%})",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
