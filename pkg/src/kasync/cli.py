"""Command-line entry point: ``kasync run|sweep|plot|partition``.

Exit codes: 0 success, 2 invalid configuration or usage, 3 numeric failure.
Logging verbosity comes from ``KASYNC_LOG`` (error, info or debug).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ExperimentConfig, read_json
from .errors import ConfigError, FormatError, NumericError, SamplingError, UsageError
from .plots import emit_plots
from .runner import dump_partition, run_experiment, run_sweep

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _parser():
    p = argparse.ArgumentParser(prog="kasync", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    s = sub.add_parser("sweep", help="run a Cartesian sweep of experiments")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--parallel", type=int, default=1)
    pl = sub.add_parser("plot", help="write SVG plots for a run or sweep directory")
    pl.add_argument("dir")
    pa = sub.add_parser("partition", help="dump the non-IID client shards")
    pa.add_argument("--config", required=True)
    pa.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    level = os.environ.get("KASYNC_LOG", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            run_experiment(ExperimentConfig.from_dict(read_json(args.config)), args.out)
        elif args.command == "sweep":
            run_sweep(read_json(args.config), args.out, parallel=max(1, args.parallel))
        elif args.command == "plot":
            for path in emit_plots(args.dir):
                print(path)
        elif args.command == "partition":
            print(dump_partition(ExperimentConfig.from_dict(read_json(args.config)), args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, FormatError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
