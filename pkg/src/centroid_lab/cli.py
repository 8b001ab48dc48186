"""Command-line entry point: ``centroid-lab <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .analysis import AnalysisError
from .detection import DetectionError
from .experiments import COMMANDS, ConfigError, ExperimentConfig
from .states import StateError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
THREADS_ENV = "CENTROID_LAB_THREADS"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--events", type=int, help="number of events N0 (overrides the config)")
    common.add_argument("--method", choices=["I", "II"], help="shift-combination method")
    common.add_argument("--threads", type=int,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")

    parser = argparse.ArgumentParser(prog="centroid-lab",
                                     description="Optical centroid measurement Monte Carlo experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sample": "draw events and write them as CSV",
        "sweep-size": "rms deviation against detector size",
        "sweep-shift": "rms deviation against detector shift for fixed sizes",
        "subsets": "size sweeps averaged over disjoint event subsets",
        "mpa": "close-event multiphoton statistics of jointly Gaussian states",
        "fixed-feature": "size sweeps of jointly Gaussian states with equal feature size",
        "cat": "rms deviation of cat states against |alpha| and phi",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError("thread count must be at least 1")
    return value


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        data = ExperimentConfig.load(args.config).to_dict()
    elif args.command == "cat":
        data["state"] = {"type": "cat"}
    elif args.command == "mpa":
        data["state"] = {"type": "jg", "n": 2, "b": 1.0, "beta": 1.0}
    overrides = {"seed": args.seed, "output_dir": args.out, "n_events": args.events, "method": args.method}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        threads = resolve_threads(args.threads)
        config = load_config(args)
    except (ConfigError, StateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = COMMANDS[args.command](config, threads=threads)
    except (ConfigError, StateError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnalysisError, DetectionError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    summary = {k: v for k, v in result.items() if k not in ("rows", "alpha_rows", "phi_rows")}
    if "paths" in summary:
        summary["paths"] = [str(p) for p in summary["paths"]]
    summary["config_hash"] = config.config_hash()
    print(json.dumps(summary, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
