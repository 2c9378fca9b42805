"""Command line entry point: ``cachenet run|validate|defaults``."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, UnknownExperimentError, default_config_text, load_config
from .experiments import OutputPathError, run_experiment
from .geometry import ParameterError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_UNKNOWN_EXPERIMENT = 3
EXIT_OUTPUT = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cachenet", description="Cache-enabled small-cell network experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiment named in a config file")
    run.add_argument("config")
    run.add_argument("-o", "--out", default="results", help="output directory (default: results)")
    run.add_argument("--experiment", help="override experiment.name")
    run.add_argument("--no-plots", action="store_true", help="write CSV files only")
    val = sub.add_parser("validate", help="check a config file without running it")
    val.add_argument("config")
    sub.add_parser("defaults", help="print the default config")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "defaults":
            sys.stdout.write(default_config_text())
            return EXIT_OK
        spec = load_config(args.config)
        if args.command == "validate":
            print(f"{args.config}: ok ({spec.experiment_name}, {len(spec.sweep_values)} grid points, {len(spec.seeds)} seeds)")
            return EXIT_OK
        if args.experiment:
            if args.experiment not in EXPERIMENTS:
                raise UnknownExperimentError(f"unknown experiment '{args.experiment}' (choose from {', '.join(EXPERIMENTS)})")
            spec.experiment_name = args.experiment
            spec.params["experiment.name"] = args.experiment
        files = run_experiment(spec, args.out, plots=not args.no_plots)
        for kind, path in files.items():
            print(f"{kind}: {path}")
        return EXIT_OK
    except UnknownExperimentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN_EXPERIMENT
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputPathError as e:
        print(f"output error: {e}", file=sys.stderr)
        return EXIT_OUTPUT
    except ParameterError as e:
        print(f"parameter error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
