"""Command-line entry points.

  adacomp run   --config cfg.json --out outdir
  adacomp sweep --config cfg.json --axis {L_T,minibatch,learners} --values 50,200,800 [--out outdir]

ADACOMP_THREADS (default 1) sets how many learner compute phases may run
concurrently; it never changes results.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .runner import SWEEP_AXES, run, sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adacomp",
                                     description="Residual-gradient compression experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one experiment")
    run_p.add_argument("--config", required=True, help="experiment JSON")
    run_p.add_argument("--out", required=True, help="output directory")

    sweep_p = sub.add_parser("sweep", help="run the config across one axis")
    sweep_p.add_argument("--config", required=True, help="experiment JSON")
    sweep_p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep_p.add_argument("--values", required=True, help="comma-separated integers")
    sweep_p.add_argument("--out", default="sweep-out", help="output directory")

    args = parser.parse_args(argv)
    threads = int(os.environ.get("ADACOMP_THREADS", "1"))

    try:
        cfg = ExperimentConfig.load(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "run":
        summary = run(cfg, Path(args.out), threads=threads)
        if summary["diverged"]:
            print(f"run diverged at epoch {summary['diverged']['epoch']}, "
                  f"step {summary['diverged']['step']}; partial metrics written to {args.out}",
                  file=sys.stderr)
            return EXIT_DIVERGED
        print(f"final test error {summary['final_test_error']:.4f}, "
              f"mean compression rate {summary['mean_rate_overall']:.1f}x -> {args.out}")
        return EXIT_OK

    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        print(f"error: --values must be comma-separated integers, got {args.values!r}",
              file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return EXIT_CONFIG
    rows = sweep(cfg, args.axis, values, Path(args.out), threads=threads)
    for r in rows:
        err = "-" if r["final_test_error"] is None else f"{r['final_test_error']:.4f}"
        rate = "-" if r["mean_compression_rate"] is None else f"{r['mean_compression_rate']:.1f}x"
        print(f"{args.axis}={r['value']}: test error {err}, rate {rate} [{r['status']}]")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
