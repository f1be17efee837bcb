"""Command-line entry point: ``brwkit <kind> [--config PATH] [flags]``."""

from __future__ import annotations

import argparse
import os
import sys
import warnings

from .. import __version__
from ..errors import BRWError, ConfigError
from .config import KINDS, default_config, parse_config
from .report import emit_report
from .runner import run_experiment

EXIT_OK = 0
EXIT_GATE = 1
EXIT_ERROR = 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="brwkit",
        description="Simulate boundary-case branching random walks and test their limit laws.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", metavar="PATH", help="experiment configuration file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--replicas", type=int, help="number of replicas (pool size for estimate-cm)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--n", type=int, help="measurement generation")
        p.add_argument("--barrier", type=float, help="truncation barrier B")
        p.add_argument("--eps-record", type=float, dest="eps_record",
                       help="record-stopping threshold")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--gate", action="store_true",
                       help="exit nonzero when the kind's acceptance gate fails")
    return parser


def load(args):
    if args.config:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if cfg.kind != args.kind:
            raise ConfigError([f"config kind {cfg.kind!r} does not match command {args.kind!r}"])
    else:
        cfg = default_config(args.kind)
    return cfg.with_overrides(seed=args.seed, replicas=args.replicas, workers=args.workers,
                              n=args.n, barrier=args.barrier, eps_record=args.eps_record,
                              out=args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args)
        os.makedirs(cfg.out, exist_ok=True)
        if not os.access(cfg.out, os.W_OK):
            raise ConfigError([f"output directory {cfg.out!r} is not writable"])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report, passed = run_experiment(cfg)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        text = emit_report({**report, "gate_passed": passed}, cfg)
        with open(os.path.join(cfg.out, "report.json"), "w") as fh:
            fh.write(text)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_ERROR
    except (BRWError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(text)
    if args.gate and not passed:
        print("acceptance gate failed", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
